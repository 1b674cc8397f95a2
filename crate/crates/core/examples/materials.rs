//! Lists the shipped material table, stiffest last, and looks one up by
//! its mask colour.

use sonomat::material::{MaterialTable, Rgb};

fn main() {
    let table = MaterialTable::shipped();
    println!("{:<10} {:>9} {:>9} {:>6} {:>9} {:>7}", "name", "E (Pa)", "rho", "nu", "c (m/s)", "h (m)");
    for m in table.sorted_by_stiffness() {
        println!(
            "{:<10} {:>9.2e} {:>9.0} {:>6.2} {:>9.1} {:>7.4}",
            m.name,
            m.young_modulus,
            m.density,
            m.poisson_ratio,
            m.stiffness_speed(),
            m.default_thickness
        );
    }
    let glass = table.lookup_by_name("glass").unwrap();
    let again = table.lookup_by_color(glass.label_color).unwrap();
    println!("glass colour {:?} -> {}", glass.label_color, again.name);
    match table.lookup_by_color(Rgb([1, 2, 3])) {
        Ok(m) => println!("unexpected {}", m.name),
        Err(e) => println!("rgb(1,2,3): {e}"),
    }
}

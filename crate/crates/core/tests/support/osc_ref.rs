//! A second OSC 1.0 message encoder, written from the wire format rather
//! than sharing code with the library: strings are NUL-terminated and
//! zero-padded to four bytes, numbers are big-endian, blobs carry a size
//! prefix and padding.

pub enum RefArg<'a> {
    I(i32),
    F(f32),
    S(&'a str),
    B(&'a [u8]),
}

fn osc_string(s: &str) -> Vec<u8> {
    let mut v: Vec<u8> = s.bytes().collect();
    v.push(0);
    while !v.len().is_multiple_of(4) {
        v.push(0);
    }
    v
}

fn be32(x: u32) -> [u8; 4] {
    [(x >> 24) as u8, (x >> 16) as u8, (x >> 8) as u8, x as u8]
}

pub fn reference_encode(address: &str, args: &[RefArg]) -> Vec<u8> {
    let mut tags = String::from(",");
    let mut payload = Vec::new();
    for a in args {
        match a {
            RefArg::I(i) => {
                tags.push('i');
                payload.extend(be32(*i as u32));
            }
            RefArg::F(f) => {
                tags.push('f');
                payload.extend(be32(f.to_bits()));
            }
            RefArg::S(s) => {
                tags.push('s');
                payload.extend(osc_string(s));
            }
            RefArg::B(b) => {
                tags.push('b');
                payload.extend(be32(b.len() as u32));
                payload.extend(b.iter());
                payload.extend(std::iter::repeat_n(0, (4 - b.len() % 4) % 4));
            }
        }
    }
    [osc_string(address), osc_string(&tags), payload].concat()
}

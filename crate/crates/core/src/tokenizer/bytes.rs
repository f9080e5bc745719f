// SPDX-License-Identifier: MIT OR Apache-2.0

//! Byte to printable-symbol remapping used by the GPT-2 vocabulary files.
//!
//! Printable Latin-1 bytes map to themselves; the remaining 68 bytes are
//! shifted into U+0100.. in ascending byte order.

/// Symbol for each raw byte, indexed by byte value.
pub const BYTE_TO_SYMBOL: [char; 256] = [
    '\u{0100}', '\u{0101}', '\u{0102}', '\u{0103}', '\u{0104}', '\u{0105}', '\u{0106}', '\u{0107}',
    '\u{0108}', '\u{0109}', '\u{010a}', '\u{010b}', '\u{010c}', '\u{010d}', '\u{010e}', '\u{010f}',
    '\u{0110}', '\u{0111}', '\u{0112}', '\u{0113}', '\u{0114}', '\u{0115}', '\u{0116}', '\u{0117}',
    '\u{0118}', '\u{0119}', '\u{011a}', '\u{011b}', '\u{011c}', '\u{011d}', '\u{011e}', '\u{011f}',
    '\u{0120}', '\u{0021}', '\u{0022}', '\u{0023}', '\u{0024}', '\u{0025}', '\u{0026}', '\u{0027}',
    '\u{0028}', '\u{0029}', '\u{002a}', '\u{002b}', '\u{002c}', '\u{002d}', '\u{002e}', '\u{002f}',
    '\u{0030}', '\u{0031}', '\u{0032}', '\u{0033}', '\u{0034}', '\u{0035}', '\u{0036}', '\u{0037}',
    '\u{0038}', '\u{0039}', '\u{003a}', '\u{003b}', '\u{003c}', '\u{003d}', '\u{003e}', '\u{003f}',
    '\u{0040}', '\u{0041}', '\u{0042}', '\u{0043}', '\u{0044}', '\u{0045}', '\u{0046}', '\u{0047}',
    '\u{0048}', '\u{0049}', '\u{004a}', '\u{004b}', '\u{004c}', '\u{004d}', '\u{004e}', '\u{004f}',
    '\u{0050}', '\u{0051}', '\u{0052}', '\u{0053}', '\u{0054}', '\u{0055}', '\u{0056}', '\u{0057}',
    '\u{0058}', '\u{0059}', '\u{005a}', '\u{005b}', '\u{005c}', '\u{005d}', '\u{005e}', '\u{005f}',
    '\u{0060}', '\u{0061}', '\u{0062}', '\u{0063}', '\u{0064}', '\u{0065}', '\u{0066}', '\u{0067}',
    '\u{0068}', '\u{0069}', '\u{006a}', '\u{006b}', '\u{006c}', '\u{006d}', '\u{006e}', '\u{006f}',
    '\u{0070}', '\u{0071}', '\u{0072}', '\u{0073}', '\u{0074}', '\u{0075}', '\u{0076}', '\u{0077}',
    '\u{0078}', '\u{0079}', '\u{007a}', '\u{007b}', '\u{007c}', '\u{007d}', '\u{007e}', '\u{0121}',
    '\u{0122}', '\u{0123}', '\u{0124}', '\u{0125}', '\u{0126}', '\u{0127}', '\u{0128}', '\u{0129}',
    '\u{012a}', '\u{012b}', '\u{012c}', '\u{012d}', '\u{012e}', '\u{012f}', '\u{0130}', '\u{0131}',
    '\u{0132}', '\u{0133}', '\u{0134}', '\u{0135}', '\u{0136}', '\u{0137}', '\u{0138}', '\u{0139}',
    '\u{013a}', '\u{013b}', '\u{013c}', '\u{013d}', '\u{013e}', '\u{013f}', '\u{0140}', '\u{0141}',
    '\u{0142}', '\u{00a1}', '\u{00a2}', '\u{00a3}', '\u{00a4}', '\u{00a5}', '\u{00a6}', '\u{00a7}',
    '\u{00a8}', '\u{00a9}', '\u{00aa}', '\u{00ab}', '\u{00ac}', '\u{0143}', '\u{00ae}', '\u{00af}',
    '\u{00b0}', '\u{00b1}', '\u{00b2}', '\u{00b3}', '\u{00b4}', '\u{00b5}', '\u{00b6}', '\u{00b7}',
    '\u{00b8}', '\u{00b9}', '\u{00ba}', '\u{00bb}', '\u{00bc}', '\u{00bd}', '\u{00be}', '\u{00bf}',
    '\u{00c0}', '\u{00c1}', '\u{00c2}', '\u{00c3}', '\u{00c4}', '\u{00c5}', '\u{00c6}', '\u{00c7}',
    '\u{00c8}', '\u{00c9}', '\u{00ca}', '\u{00cb}', '\u{00cc}', '\u{00cd}', '\u{00ce}', '\u{00cf}',
    '\u{00d0}', '\u{00d1}', '\u{00d2}', '\u{00d3}', '\u{00d4}', '\u{00d5}', '\u{00d6}', '\u{00d7}',
    '\u{00d8}', '\u{00d9}', '\u{00da}', '\u{00db}', '\u{00dc}', '\u{00dd}', '\u{00de}', '\u{00df}',
    '\u{00e0}', '\u{00e1}', '\u{00e2}', '\u{00e3}', '\u{00e4}', '\u{00e5}', '\u{00e6}', '\u{00e7}',
    '\u{00e8}', '\u{00e9}', '\u{00ea}', '\u{00eb}', '\u{00ec}', '\u{00ed}', '\u{00ee}', '\u{00ef}',
    '\u{00f0}', '\u{00f1}', '\u{00f2}', '\u{00f3}', '\u{00f4}', '\u{00f5}', '\u{00f6}', '\u{00f7}',
    '\u{00f8}', '\u{00f9}', '\u{00fa}', '\u{00fb}', '\u{00fc}', '\u{00fd}', '\u{00fe}', '\u{00ff}',
];

/// Symbol for a raw byte.
#[inline]
pub fn symbol_for(byte: u8) -> char {
    BYTE_TO_SYMBOL[byte as usize]
}

/// Raw byte for a vocabulary symbol, if the symbol belongs to the map.
pub fn byte_for(symbol: char) -> Option<u8> {
    let cp = symbol as u32;
    match cp {
        0x21..=0x7e | 0xa1..=0xac | 0xae..=0xff => Some(cp as u8),
        0x100..=0x143 => {
            // remapped bytes are assigned in ascending raw order
            let nth = (cp - 0x100) as usize;
            (0u8..=255).filter(|&b| !is_printable(b)).nth(nth)
        }
        _ => None,
    }
}

fn is_printable(b: u8) -> bool {
    matches!(b, 0x21..=0x7e | 0xa1..=0xac | 0xae..=0xff)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generate() -> [char; 256] {
        let mut table = ['\0'; 256];
        let mut next = 0x100u32;
        for b in 0..=255u8 {
            table[b as usize] = if is_printable(b) {
                char::from(b)
            } else {
                let c = char::from_u32(next).unwrap();
                next += 1;
                c
            };
        }
        table
    }

    #[test]
    fn frozen_table_matches_generation_rule() {
        assert_eq!(BYTE_TO_SYMBOL, generate());
    }

    #[test]
    fn bijection_over_all_bytes() {
        let mut seen = std::collections::HashSet::new();
        for b in 0..=255u8 {
            let s = symbol_for(b);
            assert!(seen.insert(s));
            assert_eq!(byte_for(s), Some(b));
        }
        assert_eq!(byte_for('\u{144}'), None);
        assert_eq!(byte_for(' '), None);
    }

    #[test]
    fn space_and_newline_symbols() {
        assert_eq!(symbol_for(b' '), '\u{120}');
        assert_eq!(symbol_for(b'\n'), '\u{10a}');
    }
}

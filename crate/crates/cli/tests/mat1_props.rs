use kahlerlab::mat1::Mat1;
use proptest::prelude::*;

proptest! {
    #[test]
    fn mat1_round_trips_bit_for_bit(n in 1u32..=2, grid in 1u32..=5, entries in 1u32..=4, seed in any::<u64>()) {
        let len = (grid as usize).pow(2 * n) * entries as usize;
        let values: Vec<f64> = (0..len as u64)
            .map(|i| f64::from_bits(seed.rotate_left(i as u32 % 64) ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
            .collect();
        let m = Mat1 { n, grid, entries, values };
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        prop_assert_eq!(buf.len(), 16 + 8 * len);
        let back = Mat1::read_from(&mut buf.as_slice()).unwrap();
        prop_assert_eq!((back.n, back.grid, back.entries), (n, grid, entries));
        prop_assert!(back.values.iter().zip(&m.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(Mat1::read_from(&mut &buf[..buf.len() - 1]).is_err());
    }
}

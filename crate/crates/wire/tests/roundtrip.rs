use floorctl_wire::strategy;
use floorctl_wire::{decode, encode};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn decode_inverts_encode(msg in strategy::message()) {
        let bytes = encode(&msg).unwrap();
        prop_assert_eq!(decode(&bytes).unwrap(), msg);
    }

    #[test]
    fn encoding_is_canonical_and_aligned(msg in strategy::message()) {
        let bytes = encode(&msg).unwrap();
        prop_assert_eq!(bytes.len() % 4, 0);
        let words = u16::from_be_bytes([bytes[2], bytes[3]]) as usize;
        prop_assert_eq!(words * 4, bytes.len() - 12);
        let again = encode(&decode(&bytes).unwrap()).unwrap();
        prop_assert_eq!(again, bytes);
    }
}

//! Byte-exact wire layouts built from published ristretto255 encodings of
//! small multiples of the generator.

use num_bigint::BigUint;
use privaflow_core::ipfe::{DriverId, DriverPublic};
use privaflow_core::wire::{
    decode_ciphertext, decode_master_public, decode_pool, decode_report, encode_ciphertext, encode_driver_key,
    encode_functional_key, encode_master_public, encode_pool, encode_report,
};
use privaflow_core::{group_gen, CellCiphertext, CellId, DriverKey, FunctionalKey, GroupElement, MasterPublic, Report, Scalar};

const IDENTITY: &str = "0000000000000000000000000000000000000000000000000000000000000000";
const G1: &str = "e2f2ae0a6abc4e71a884a961c500515f58e30b6aa582dd8db6a65945e08d2d76";
const G2: &str = "6a493210f7499cd17fecb510ae0cea23a110e8d5b901f8acadd3095c73a3b919";
const G3: &str = "94741f5d5d52755ece4f23f044ee27d5d1ea1e2bd196b462166b16152a9d0259";
/// 2^252 + 27742317777372353535851937790883648493
const ORDER_DEC: &str = "7237005577332262213973186563042994240857116359379907606001950938285454250989";

fn hex(s: &str) -> Vec<u8> {
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
        .collect()
}

fn mul(k: u64) -> GroupElement {
    GroupElement::exp_generator(&Scalar::from_u64(k))
}

fn scalar_hex(v: u8) -> String {
    let mut s = format!("{v:02x}");
    s.push_str(&"00".repeat(31));
    s
}

#[test]
fn generator_multiples_match_published_encodings() {
    for (k, enc) in [(0, IDENTITY), (1, G1), (2, G2), (3, G3)] {
        assert_eq!(mul(k).to_bytes().to_vec(), hex(enc), "{k}G");
    }
}

fn sample_ciphertext() -> CellCiphertext {
    CellCiphertext {
        driver_id: DriverId(0x0403_0201),
        t: [mul(1), mul(2)],
        c: mul(0),
    }
}

#[test]
fn ciphertext_layout() {
    let bytes = encode_ciphertext(CellId(0x0605), &sample_ciphertext());
    let want = hex(&format!("01{}{}{G1}{G2}{IDENTITY}", "01020304", "0506"));
    assert_eq!(bytes, want);
    assert_eq!(decode_ciphertext(&want).unwrap(), (CellId(0x0605), sample_ciphertext()));
}

#[test]
fn report_layout() {
    let ct = CellCiphertext {
        driver_id: DriverId(7),
        ..sample_ciphertext()
    };
    let report = Report {
        driver_id: DriverId(7),
        epoch: 0x0102,
        entries: vec![(CellId(1), ct), (CellId(3), ct)],
    };
    let rec = |cell: &str| format!("0107000000{cell}{G1}{G2}{IDENTITY}");
    let want = hex(&format!("07000000{}{}{}{}", "02010000", "0200", rec("0100"), rec("0300")));
    assert_eq!(encode_report(&report), want);
    assert_eq!(decode_report(&want).unwrap(), report);

    let swapped = hex(&format!("07000000020100000200{}{}", rec("0300"), rec("0100")));
    assert!(decode_report(&swapped).is_err());
}

#[test]
fn driver_key_layout() {
    let key = DriverKey {
        driver_id: DriverId(2),
        params: group_gen(128).unwrap(),
        a_vec: [mul(1), mul(3)],
        wa: mul(2),
        u: Scalar::from_u64(5),
    };
    let want = hex(&format!("0102000000{G1}{G3}{G2}{}", scalar_hex(5)));
    assert_eq!(encode_driver_key(&key), want);
    assert_eq!(want.len(), 133);
}

#[test]
fn master_public_layout() {
    let mpk = MasterPublic {
        params: group_gen(128).unwrap(),
        records: vec![DriverPublic {
            a_vec: [mul(1), mul(2)],
            wa: mul(3),
        }],
    };
    let want = hex(&format!("010101000000{G1}{G2}{G3}"));
    assert_eq!(encode_master_public(&mpk), want);
    assert_eq!(decode_master_public(&want).unwrap(), mpk);
}

#[test]
fn functional_key_layout() {
    let dk = FunctionalKey {
        y: vec![Scalar::ONE],
        d: vec![[Scalar::from_u64(2), Scalar::from_u64(3)]],
        z: Scalar::from_u64(4),
    };
    let want = hex(&format!("0101000000{}{}{}{}", scalar_hex(1), scalar_hex(2), scalar_hex(3), scalar_hex(4)));
    assert_eq!(encode_functional_key(&dk), want);
}

#[test]
fn pool_layout() {
    let ct = CellCiphertext {
        driver_id: DriverId(1),
        ..sample_ciphertext()
    };
    let want = hex(&format!("0101000000010000000101000000ffff{G1}{G2}{IDENTITY}"));
    assert_eq!(encode_pool(DriverId(1), &[ct]), want);
    assert_eq!(decode_pool(&want).unwrap(), (DriverId(1), vec![ct]));
}

#[test]
fn order_minus_one_is_the_largest_scalar() {
    let params = group_gen(128).unwrap();
    let order = BigUint::from_bytes_le(&params.order);
    assert_eq!(order, ORDER_DEC.parse::<BigUint>().unwrap());
    let mut minus_one = (order.clone() - 1u32).to_bytes_le();
    minus_one.resize(32, 0);
    let s = Scalar::from_bytes(&minus_one.try_into().unwrap()).unwrap();
    assert_eq!(s + Scalar::ONE, Scalar::ZERO);
    let mut at_order = order.to_bytes_le();
    at_order.resize(32, 0);
    assert!(Scalar::from_bytes(&at_order.try_into().unwrap()).is_err());
}

fn miller_rabin(n: &BigUint, bases: &[u32]) -> bool {
    let one = BigUint::from(1u32);
    let n1 = n - &one;
    let s = n1.trailing_zeros().unwrap();
    let d = &n1 >> s;
    'witness: for &a in bases {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x == one || x == n1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&BigUint::from(2u32), n);
            if x == n1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[test]
fn group_order_is_prime() {
    const BASES: [u32; 20] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71];
    let order = BigUint::from_bytes_le(&group_gen(128).unwrap().order);
    assert!(miller_rabin(&order, &BASES));
    assert_eq!(order.bits(), 253);
    // Sanity-check the test on a composite of similar size.
    assert!(!miller_rabin(&(order.clone() * 3u32), &BASES));
    assert!(!miller_rabin(&(BigUint::from(561u32)), &BASES));
}

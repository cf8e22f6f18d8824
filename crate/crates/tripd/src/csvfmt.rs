//! CSV float formatting: '.' decimal separator, no locale, 17 significant
//! digits so that written values round-trip bit-exactly.

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    #[test]
    fn round_trips_bit_exactly() {
        for &v in &[0.5, 1.0 / 3.0, 1e-300, -2.5e17, std::f64::consts::PI] {
            let s = super::float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{s}");
        }
    }
}

//! Scalar unit conversions. Powers are watts and variances are linear
//! everywhere inside the library; dB/dBm appear only at the configuration
//! boundary and in log-domain plots.

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dbm_round_trip() {
        for dbm in [-96.0, -30.0, 0.0, 23.0, 46.0] {
            assert_relative_eq!(watt_to_dbm(dbm_to_watt(dbm)), dbm, max_relative = 1e-12);
        }
    }

    #[test]
    fn reference_points() {
        assert_relative_eq!(dbm_to_watt(30.0), 1.0, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watt(0.0), 1e-3, max_relative = 1e-12);
        // -96 dBm receiver noise floor
        assert_relative_eq!(dbm_to_watt(-96.0), 2.51188643150958e-13, max_relative = 1e-12);
        assert_relative_eq!(db_to_linear(0.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(linear_to_db(db_to_linear(-148.1)), -148.1, max_relative = 1e-12);
    }
}

//! Conversions between the human units used in configuration files and the
//! SI-style units used internally (per square meter, watts per MHz, seconds).

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn per_km2_to_per_m2(per_km2: f64) -> f64 {
    per_km2 / 1e6
}

pub fn per_m2_to_per_km2(per_m2: f64) -> f64 {
    per_m2 * 1e6
}

pub fn ms_to_s(ms: f64) -> f64 {
    ms / 1e3
}

pub fn s_to_ms(s: f64) -> f64 {
    s * 1e3
}

pub fn mhz_to_hz(mhz: f64) -> f64 {
    mhz * 1e6
}

pub fn hz_to_mhz(hz: f64) -> f64 {
    hz / 1e6
}

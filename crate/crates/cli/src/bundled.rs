//! Experiment files shipped with the binary.

pub struct Bundled {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! bundle {
    ($($name:literal),* $(,)?) => {
        &[$(Bundled { name: $name, text: include_str!(concat!("../specs/", $name, ".toml")) }),*]
    };
}

pub const BUNDLED: &[Bundled] = bundle![
    "default_point",
    "fig4_syn_surface",
    "fig5_asyn_surface",
    "fig6_gain_vs_mssc",
    "fig7_regions_vs_period",
    "fig7_regions_vs_snr",
    "fig8_mse_vs_blocklength",
    "fig10_mse_vs_time_shift",
    "fig11_min_mse_vs_mssc",
    "fig12_min_mse_vs_snr",
];

pub fn find(name: &str) -> Option<&'static Bundled> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    BUNDLED.iter().find(|b| b.name == name)
}

//! `synth`: generate a synthetic oracle dataset and write it in the standard
//! binary format together with its oracle metadata.

use anyhow::bail;
use atlas_core::data::save_binary;
use atlas_core::synth::{
    attach_planted_properties, generate_manifold, ManifoldSpec, PatchSpec,
};

use crate::config::RunConfig;
use crate::manifest::Manifest;

pub fn run(config: &RunConfig) -> anyhow::Result<()> {
    let sc = &config.synth;
    let seed = config.sub_seed("synth");
    let spec = match sc.kind.as_str() {
        "flat_subspace" => ManifoldSpec::flat(sc.intrinsic_dim, sc.ambient_dim, sc.n_samples, sc.noise_std, seed),
        "swiss_roll" => ManifoldSpec::swiss_roll(sc.ambient_dim, sc.n_samples, sc.noise_std, seed),
        "sphere" => ManifoldSpec::sphere(sc.intrinsic_dim, sc.ambient_dim, sc.n_samples, sc.noise_std, seed),
        "heterogeneous_patchwork" => ManifoldSpec::patchwork(
            sc.patches
                .iter()
                .map(|&(d, w)| PatchSpec { intrinsic_dim: d, weight: w })
                .collect(),
            sc.ambient_dim,
            sc.n_samples,
            sc.noise_std,
            seed,
            sc.patch_grid,
            sc.patch_offset_scale,
        ),
        other => bail!("unknown manifold kind '{other}'"),
    };
    let mut synth = generate_manifold(&spec)?;
    if sc.planted > 0 {
        if spec.kind != atlas_core::synth::ManifoldKind::FlatSubspace {
            bail!("planted properties via frame columns require kind = flat_subspace");
        }
        let frame = synth.oracle.frames[0].clone();
        if sc.planted > frame.ncols() {
            bail!("cannot plant {} properties on a d={} manifold", sc.planted, frame.ncols());
        }
        let dirs: Vec<(String, ndarray::Array1<f64>)> = (0..sc.planted)
            .map(|j| (format!("p{j}"), frame.column(j).to_owned()))
            .collect();
        attach_planted_properties(&mut synth, &dirs, 0.0, seed ^ 1)?;
    }

    let dataset_dir = sc
        .dataset_out
        .clone()
        .unwrap_or_else(|| config.out_dir.join("dataset"));
    save_binary(&synth.dataset, &dataset_dir)?;

    let mut manifest = Manifest::new("synth", config.seed)
        .with_dataset(&synth.dataset)
        .with_parameters(sc);
    let oracle_bytes = serde_json::to_vec(&synth.oracle)?;
    manifest.write_output(&config.out_dir, "oracle.json", &oracle_bytes)?;
    manifest.outputs.push(format!("{}", dataset_dir.display()));
    manifest.finish(&config.out_dir)?;
    Ok(())
}

use dsradar::dictionaries::{build_sampling, mu_profile, welch_bound, SamplingSpec};
use dsradar::ds_codes::catalog;
use dsradar::harness::{
    dry_run_summary, emit_plot_data, random_coherences, run_experiment, ExperimentConfig, PlotKind, TableData,
};
use dsradar::scene_measurement::RadarParams;
use dsradar::Error;

fn radar_91() -> &'static str {
    r#"
[radar]
pri_s = 10e-6
bandwidth_hz = 9.1e6
pulses = 8
delay_grids = 91
doppler_grids = 16
"#
}

#[test]
fn random_sampling_is_more_coherent_than_difference_sets() {
    for name in ["91-10-1", "993-32-1"] {
        let ds = catalog(name).unwrap();
        let n = ds.modulus() as usize;
        let welch = welch_bound(n, ds.size());
        let draws = random_coherences(n, ds.size(), 500, 17).unwrap();
        let above = draws.iter().filter(|&&mu| mu > welch + 1e-9).count();
        assert!(above as f64 >= 0.99 * draws.len() as f64, "{name}: {above}/500");
    }
}

#[test]
fn ds_sampling_inside_a_wider_range_keeps_welch_equality() {
    // 3000 Nyquist samples per PRI, grid of 2863.
    let params = RadarParams {
        pri_s: 10e-6,
        bandwidth_hz: 300e6,
        pulses: 1,
        delay_grids: 2863,
        doppler_grids: 1,
    };
    let ds = catalog("2863-54-1").unwrap();
    let s = build_sampling(SamplingSpec::DifferenceSet(&ds), 2863, params.fourier_range().unwrap()).unwrap();
    let mu = mu_profile(&s.indices, 2863).into_iter().fold(0.0, f64::max);
    assert!((mu - welch_bound(2863, 54)).abs() < 1e-10);
}

#[test]
fn detection_rises_across_the_snr_sweep() {
    let text = format!(
        r#"
kind = "detect"
seed = 11
trials = 40
{}
[sampling]
ds = "91-10-1"

[scene]
targets = 2

[sweep]
snr_db = [-30.0, 20.0]

[[runs]]
model = "structured"
"#,
        radar_91()
    );
    let table = run_experiment(&ExperimentConfig::from_toml(&text).unwrap()).unwrap();
    let TableData::Detection { rows, .. } = &table.data else {
        panic!("detection table expected")
    };
    assert!(rows[0].p_detect < 0.2, "low SNR p={}", rows[0].p_detect);
    assert!(rows[1].p_detect > 0.9, "high SNR p={}", rows[1].p_detect);
}

#[test]
fn oracle_synthesis_runs_every_model() {
    let text = format!(
        r#"
kind = "detect"
seed = 4
trials = 3
{}
[scene]
targets = 1
synthesis = "oracle"

[sweep]
snr_db = [inf]

[[runs]]
model = "structured"
[[runs]]
model = "standard"
[[runs]]
model = "modified-df"
[[runs]]
model = "df"
[[runs]]
model = "nyquist-reference"
"#,
        radar_91()
    );
    let table = run_experiment(&ExperimentConfig::from_toml(&text).unwrap()).unwrap();
    let csv = table.to_csv();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.contains(",nyquist-reference,nyquist,rect,3,"));
    assert!(csv.contains(",df,consecutive,rect,3,"));
    assert!(csv.contains(",modified-df,ds,dsfcm,3,"));
    // Noiseless on the oracle path: the DS-FCM pipelines find the target.
    let TableData::Detection { rows, .. } = &table.data else {
        panic!()
    };
    assert!(rows.iter().filter(|r| r.waveform == "dsfcm").all(|r| r.p_detect == 1.0));
}

#[test]
fn sweeps_prepend_their_column() {
    let text = format!(
        r#"
kind = "targets-sweep"
seed = 1
trials = 2
{}
[sweep]
snr_db = [10.0]
targets = [1, 2]

[[runs]]
model = "structured"
"#,
        radar_91()
    );
    let csv = run_experiment(&ExperimentConfig::from_toml(&text).unwrap())
        .unwrap()
        .to_csv();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("targets,snr_db,model,"));
    assert!(lines.next().unwrap().starts_with("1,10,structured,"));
    assert!(lines.next().unwrap().starts_with("2,10,structured,"));
}

#[test]
fn coherence_and_spectrum_emit_tidy_files() {
    let dir = tempfile_dir("coh");
    let text = format!(
        "kind = \"coherence\"\n{}\n[coherence]\nhistogram_trials = 20\nbins = 5\n",
        radar_91()
    );
    let table = run_experiment(&ExperimentConfig::from_toml(&text).unwrap()).unwrap();
    let files = emit_plot_data(&table, PlotKind::Coherence, &dir).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        [
            "coherence_consecutive.csv",
            "coherence_random.csv",
            "coherence_ds.csv",
            "coherence_histogram.csv"
        ]
    );
    let ds = std::fs::read_to_string(dir.join("coherence_ds.csv")).unwrap();
    assert!(ds.starts_with("u,mu_of_u\n"));
    for line in ds.lines().skip(1) {
        let mu: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((mu - 0.3).abs() < 1e-12);
    }
    assert_eq!(ds.lines().count(), 91);
    let hist = std::fs::read_to_string(dir.join("coherence_histogram.csv")).unwrap();
    let total: usize = hist
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 20);

    let text = format!("kind = \"spectrum\"\n{}\n[spectrum]\npoints = 11\n", radar_91());
    let table = run_experiment(&ExperimentConfig::from_toml(&text).unwrap()).unwrap();
    assert!(matches!(
        emit_plot_data(&table, PlotKind::Detect, &dir),
        Err(Error::KindMismatch { .. })
    ));
    let files = emit_plot_data(&table, PlotKind::Spectrum, &dir).unwrap();
    assert_eq!(files.len(), 3);
    let rect = std::fs::read_to_string(dir.join("spectrum_rect.csv")).unwrap();
    assert!(rect.starts_with("freq_hz,power_db\n"));
    assert_eq!(rect.lines().count(), 12);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn dry_run_validates_without_running() {
    let text = format!(
        r#"
kind = "detect"
trials = 1000000
{}
[sampling]
ds = "2863-54-1"

[sweep]
snr_db = [0.0]

[[runs]]
model = "structured"
"#,
        radar_91()
    );
    // The 2863 set does not fit a 91-sample PRI.
    let cfg = ExperimentConfig::from_toml(&text);
    assert!(matches!(cfg, Err(Error::DsOutOfRange { .. })));

    let text = text.replace("2863-54-1", "91-10-1");
    let summary = dry_run_summary(&ExperimentConfig::from_toml(&text).unwrap()).unwrap();
    assert!(summary.contains("N=91 M=16 P=8"));
    assert!(summary.contains("kronecker_bytes=1863680\n"));
}

fn tempfile_dir(tag: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("dsradar-{tag}-{}", std::process::id()))
}

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use freqdedup_core::attacks::AttackSummary;
use freqdedup_core::config::ExperimentConfig;
use freqdedup_core::defenses::{write_defended_corpus, Scheme};
use freqdedup_core::metrics::{compare_runs, dedup_ratio, read_results};
use freqdedup_core::trace::{
    chunk_file, corpus_dedup_ratio, generate_synthetic, read_corpus, read_manifest, write_corpus,
    ChunkerParams,
};
use freqdedup_core::*;

fn corpus_manifest(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("corpus").join("manifest.txt")
}

fn scheme_dir(scheme: Scheme) -> String {
    scheme.name().replace('+', "-")
}

fn cipher_manifest(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir
        .join("cipher")
        .join(scheme_dir(cfg.scheme))
        .join("manifest.txt")
}

fn results_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let d = cfg.output_dir.join("results");
    fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    Ok(d)
}

fn write_row(path: &Path, row: &EvalResult) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    compare_runs(std::slice::from_ref(row), BufWriter::new(f))?;
    Ok(())
}

/// Accepts a snapshot index (`9`), an `s`-prefixed index (`s9`) or a label.
fn resolve_snapshot(sel: &str, labels: &[String]) -> Result<usize> {
    let digits = sel.strip_prefix('s').unwrap_or(sel);
    if let Ok(i) = digits.parse::<usize>() {
        ensure!(i < labels.len(), "snapshot {i} out of range (corpus has {})", labels.len());
        return Ok(i);
    }
    labels
        .iter()
        .position(|l| l == sel)
        .with_context(|| format!("no snapshot labelled {sel:?}"))
}

fn labels_of(manifest: &Path) -> Result<Vec<String>> {
    Ok(read_manifest(manifest)?
        .iter()
        .map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
        .collect())
}

#[derive(Args)]
pub struct GenArgs {
    /// Number of snapshots including the initial one.
    #[arg(long)]
    snapshots: Option<usize>,
    /// Files in the initial image.
    #[arg(long)]
    files: Option<usize>,
    /// Initial image size in bytes.
    #[arg(long)]
    size: Option<u64>,
}

pub fn gen(cfg: &mut ExperimentConfig, a: &GenArgs) -> Result<()> {
    if let Some(n) = a.snapshots {
        cfg.corpus.snapshots = n;
    }
    if let Some(n) = a.files {
        cfg.corpus.initial_file_count = n;
    }
    if let Some(n) = a.size {
        cfg.corpus.initial_total_size = n;
        cfg.corpus.added_bytes_per_snapshot = n / 100;
    }
    cfg.validate()?;
    let params = SyntheticCorpusParams {
        rng_seed: cfg.stage_seed("gen"),
        ..cfg.corpus.clone()
    };
    let snaps = generate_synthetic(&params)?;
    let dir = cfg.output_dir.join("corpus");
    let manifest = write_corpus(&dir, &snaps)?;
    let logical: u64 = snaps.iter().map(|s| s.logical_bytes()).sum();
    println!(
        "wrote {} snapshots ({} MiB logical, dedup ratio {:.2}) to {}",
        snaps.len(),
        logical >> 20,
        corpus_dedup_ratio(&snaps),
        manifest.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct ChunkArgs {
    /// Files to chunk; each becomes one trace labelled by its file stem.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long, default_value_t = ChunkerParams::default().min)]
    min: usize,
    #[arg(long, default_value_t = ChunkerParams::default().avg)]
    avg: usize,
    #[arg(long, default_value_t = ChunkerParams::default().max)]
    max: usize,
    /// Fingerprint width in bytes.
    #[arg(long, default_value_t = ChunkerParams::default().width)]
    width: usize,
}

pub fn chunk(cfg: &ExperimentConfig, a: &ChunkArgs) -> Result<()> {
    let params = ChunkerParams {
        min: a.min,
        avg: a.avg,
        max: a.max,
        width: a.width,
    };
    params.validate()?;
    let mut traces = Vec::with_capacity(a.files.len());
    for path in &a.files {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let label = path.file_stem().unwrap_or_default().to_string_lossy();
        traces.push(chunk_file(BufReader::new(f), &params, label)?);
    }
    let manifest = write_corpus(&cfg.output_dir.join("chunks"), &traces)?;
    for t in &traces {
        println!("{}: {} chunks, {} bytes", t.label, t.len(), t.logical_bytes());
    }
    println!("manifest: {}", manifest.display());
    Ok(())
}

#[derive(Args)]
pub struct DefendArgs {
    /// mle, minhash, or minhash+scramble (alias: defend).
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Plaintext corpus manifest (default: <out>/corpus/manifest.txt).
    #[arg(long)]
    corpus: Option<PathBuf>,
}

pub fn defend(cfg: &mut ExperimentConfig, a: &DefendArgs) -> Result<()> {
    if let Some(s) = a.scheme {
        cfg.scheme = s;
    }
    cfg.validate()?;
    let manifest = a.corpus.clone().unwrap_or_else(|| corpus_manifest(cfg));
    let snaps = read_corpus(&manifest, None)
        .with_context(|| format!("reading corpus {}", manifest.display()))?;
    let outputs = snaps
        .iter()
        .map(|s| {
            let seed = cfg.stage_seed(&format!("defend/{}", s.label));
            cfg.scheme.apply(s, &cfg.segment, seed)
        })
        .collect::<freqdedup_core::Result<Vec<_>>>()?;
    let dir = cipher_manifest(cfg).parent().expect("has parent").to_path_buf();
    let out = write_defended_corpus(&dir, &outputs)?;
    let ciphers: Vec<_> = outputs.iter().map(|o| &o.cipher_trace).collect();
    println!(
        "{}: {} backups, dedup ratio {:.2} (plaintext {:.2}), manifest {}",
        cfg.scheme,
        outputs.len(),
        corpus_dedup_ratio(ciphers),
        corpus_dedup_ratio(&snaps),
        out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct AttackArgs {
    /// basic, locality, or advanced.
    #[arg(long)]
    kind: Option<AttackKind>,
    /// ciphertext-only or known-plaintext.
    #[arg(long)]
    mode: Option<AttackMode>,
    /// Leakage rate for known-plaintext mode; implies that mode when positive.
    #[arg(long)]
    leak: Option<f64>,
    /// Auxiliary plaintext snapshot (index, sN, or label).
    #[arg(long)]
    aux: Option<String>,
    /// Target encrypted snapshot (index, sN, or label).
    #[arg(long)]
    target: Option<String>,
    /// Scheme whose cipher corpus is attacked.
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(short)]
    u: Option<usize>,
    #[arg(short)]
    v: Option<usize>,
    #[arg(short)]
    w: Option<usize>,
    /// Plaintext corpus manifest (default: <out>/corpus/manifest.txt).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Cipher corpus manifest (default: <out>/cipher/<scheme>/manifest.txt).
    #[arg(long)]
    cipher: Option<PathBuf>,
}

pub fn attack(cfg: &mut ExperimentConfig, a: &AttackArgs) -> Result<()> {
    if let Some(k) = a.kind {
        cfg.attack_kind = k;
    }
    if let Some(s) = a.scheme {
        cfg.scheme = s;
    }
    if let Some(l) = a.leak {
        cfg.leakage_rate = l;
        if l > 0.0 && a.mode.is_none() {
            cfg.attack.mode = AttackMode::KnownPlaintext;
        }
    }
    if let Some(m) = a.mode {
        cfg.attack.mode = m;
    }
    for (slot, val) in [
        (&mut cfg.attack.u, a.u),
        (&mut cfg.attack.v, a.v),
        (&mut cfg.attack.w, a.w),
    ] {
        if let Some(x) = val {
            *slot = x;
        }
    }
    let plain_manifest = a.corpus.clone().unwrap_or_else(|| corpus_manifest(cfg));
    let cipher_manifest = a.cipher.clone().unwrap_or_else(|| cipher_manifest(cfg));
    let labels = labels_of(&plain_manifest)?;
    if let Some(s) = &a.aux {
        cfg.aux = resolve_snapshot(s, &labels)?;
    }
    if let Some(s) = &a.target {
        cfg.target = resolve_snapshot(s, &labels_of(&cipher_manifest)?)?;
    }
    cfg.validate()?;
    run_attack(cfg, &plain_manifest, &cipher_manifest)?;
    Ok(())
}

fn run_attack(cfg: &ExperimentConfig, plain_manifest: &Path, cipher_manifest: &Path) -> Result<EvalResult> {
    let plain_paths = read_manifest(plain_manifest)?;
    let cipher_paths = read_manifest(cipher_manifest)?;
    let aux_path = plain_paths
        .get(cfg.aux)
        .with_context(|| format!("auxiliary snapshot {} not in {}", cfg.aux, plain_manifest.display()))?;
    let target_path = cipher_paths
        .get(cfg.target)
        .with_context(|| format!("target snapshot {} not in {}", cfg.target, cipher_manifest.display()))?;
    let aux = trace::read_trace_file(aux_path, None)?;
    let target = EncryptionOutput::read(target_path)
        .with_context(|| format!("reading encrypted backup {}", target_path.display()))?;
    let c = &target.cipher_trace;

    let mode = cfg.attack.mode;
    let leak = match mode {
        AttackMode::KnownPlaintext => {
            ensure!(cfg.leakage_rate > 0.0, "known-plaintext mode needs a positive leakage rate");
            let seed = cfg.stage_seed(&format!("leakage/{}", c.label));
            Some(sample_leakage(&target.ground_truth, c, cfg.leakage_rate, seed)?)
        }
        AttackMode::CiphertextOnly => None,
    };
    let t = match cfg.attack_kind {
        AttackKind::Basic => basic_attack(c, &aux),
        AttackKind::Locality => locality_attack(c, &aux, &cfg.attack, leak.as_ref())?,
        AttackKind::Advanced => advanced_locality_attack(c, &aux, &cfg.attack, leak.as_ref())?,
    };
    let rate = inference_rate(&t, &target.ground_truth, c);

    let name = format!(
        "attack-{}-{}-{}-{}-{}",
        scheme_dir(cfg.scheme),
        cfg.attack_kind,
        mode,
        aux.label,
        c.label
    );
    let adir = cfg.output_dir.join("attacks");
    fs::create_dir_all(&adir)?;
    let pairs_path = adir.join(format!("{name}.pairs.csv"));
    t.write_report(BufWriter::new(File::create(&pairs_path)?))?;
    let summary = AttackSummary {
        kind: cfg.attack_kind,
        params: cfg.attack,
        aux: aux.label.clone(),
        target: c.label.clone(),
        inferred_pairs: t.len(),
        leaked_pairs: leak.as_ref().map_or(0, |l| l.pairs.len()),
        leakage_rate: leak.as_ref().map_or(0.0, |l| l.leakage_rate),
        inference_rate: Some(rate),
    };
    fs::write(adir.join(format!("{name}.json")), summary.to_json())?;

    let row = EvalResult {
        attack: format!("{}/{}", cfg.attack_kind, mode),
        defense: cfg.scheme.to_string(),
        aux: aux.label.clone(),
        target: c.label.clone(),
        inference_rate: rate,
        leakage_rate: summary.leakage_rate,
        ..Default::default()
    };
    write_row(&results_dir(cfg)?.join(format!("{name}.csv")), &row)?;
    println!(
        "{} {} on {} ({} vs {}): {} pairs, {} leaked, inference rate {:.5}",
        cfg.attack_kind,
        mode,
        cfg.scheme,
        aux.label,
        c.label,
        t.len(),
        summary.leaked_pairs,
        rate
    );
    Ok(row)
}

#[derive(Args)]
pub struct StoreArgs {
    /// Scheme whose cipher corpus is replayed.
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Fingerprint cache size in bytes (default: store.cache_capacity).
    #[arg(long)]
    cache: Option<u64>,
    /// Cipher corpus manifest (default: <out>/cipher/<scheme>/manifest.txt).
    #[arg(long)]
    cipher: Option<PathBuf>,
}

pub fn store(cfg: &mut ExperimentConfig, a: &StoreArgs) -> Result<()> {
    if let Some(s) = a.scheme {
        cfg.scheme = s;
    }
    if let Some(c) = a.cache {
        cfg.store.cache_capacity = c;
    }
    cfg.validate()?;
    let manifest = a.cipher.clone().unwrap_or_else(|| cipher_manifest(cfg));
    run_store(cfg, &manifest)?;
    Ok(())
}

fn run_store(cfg: &ExperimentConfig, manifest: &Path) -> Result<StoreReport> {
    let stream = read_corpus(manifest, None)
        .with_context(|| format!("reading cipher corpus {}", manifest.display()))?;
    let unique: HashSet<_> = stream.iter().flat_map(|t| t.fingerprints()).collect();
    let mut params = cfg.store;
    // size the Bloom filter for at least the stream's design load
    params.expected_fingerprints = params.expected_fingerprints.max(unique.len() as u64);
    let name = format!("{}-{}", scheme_dir(cfg.scheme), params.cache_capacity);
    let dir = cfg.output_dir.join("store").join(&name);
    let mut s = Store::create(&dir, params)?.with_event_log()?;
    for t in &stream {
        s.write_backup(t)?;
    }
    let totals = s.totals().clone();
    s.close()?;

    let row = EvalResult {
        attack: "none".into(),
        defense: cfg.scheme.to_string(),
        target: format!("cache={}", params.cache_capacity),
        storage_saving: storage_saving(&totals)?,
        dedup_ratio: dedup_ratio(&totals)?,
        ..Default::default()
    };
    write_row(&results_dir(cfg)?.join(format!("store-{name}.csv")), &row)?;
    let st = totals.stats;
    println!(
        "store {name}: saving {:.4}, metadata update {} index {} loading {} (loading share {:.3}), report {}",
        row.storage_saving,
        st.update_bytes,
        st.index_bytes,
        st.loading_bytes,
        st.loading_share(),
        dir.join("report.csv").display()
    );
    Ok(totals)
}

#[derive(Args)]
pub struct CompareArgs {
    /// Result CSVs to merge (default: every file under <out>/results).
    files: Vec<PathBuf>,
}

pub fn compare(cfg: &ExperimentConfig, a: &CompareArgs) -> Result<()> {
    let files = if a.files.is_empty() {
        let dir = cfg.output_dir.join("results");
        let mut v: Vec<PathBuf> = fs::read_dir(&dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        v.retain(|p| p.extension().is_some_and(|e| e == "csv"));
        v.sort();
        v
    } else {
        a.files.clone()
    };
    let mut rows = Vec::new();
    for f in &files {
        let r = File::open(f).with_context(|| format!("opening {}", f.display()))?;
        rows.extend(read_results(BufReader::new(r)).with_context(|| format!("parsing {}", f.display()))?);
    }
    if rows.is_empty() {
        bail!("no result rows found");
    }
    let out = cfg.output_dir.join("comparison.csv");
    compare_runs(&rows, BufWriter::new(File::create(&out)?))?;

    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{:<28} {:<18} {:<10} {:<16} {:>9} {:>9} {:>9}",
        "attack", "defense", "aux", "target", "rate", "leak", "saving"
    )?;
    for r in &rows {
        writeln!(
            stdout,
            "{:<28} {:<18} {:<10} {:<16} {:>9.5} {:>9.4} {:>9.4}",
            r.attack, r.defense, r.aux, r.target, r.inference_rate, r.leakage_rate, r.storage_saving
        )?;
    }
    writeln!(stdout, "wrote {}", out.display())?;
    Ok(())
}

pub fn run_all(base: &ExperimentConfig) -> Result<()> {
    base.validate()?;
    fs::create_dir_all(&base.output_dir)?;
    base.save(&base.output_dir.join("config.txt"))?;
    let mut cfg = base.clone();
    gen(&mut cfg, &GenArgs { snapshots: None, files: None, size: None })?;
    let plain = corpus_manifest(&cfg);
    let leak = if base.leakage_rate > 0.0 { base.leakage_rate } else { 0.002 };

    for scheme in [Scheme::Mle, Scheme::MinHash, Scheme::MinHashScramble] {
        let mut c = ExperimentConfig { scheme, ..base.clone() };
        defend(&mut c, &DefendArgs { scheme: None, corpus: Some(plain.clone()) })?;
    }

    let mut cells = vec![];
    for kind in [AttackKind::Basic, AttackKind::Locality, AttackKind::Advanced] {
        cells.push((Scheme::Mle, kind, AttackMode::CiphertextOnly));
    }
    for kind in [AttackKind::Locality, AttackKind::Advanced] {
        cells.push((Scheme::Mle, kind, AttackMode::KnownPlaintext));
    }
    for scheme in [Scheme::MinHash, Scheme::MinHashScramble] {
        cells.push((scheme, AttackKind::Advanced, AttackMode::KnownPlaintext));
    }
    for (scheme, kind, mode) in cells {
        let mut c = ExperimentConfig { scheme, attack_kind: kind, ..base.clone() };
        c.attack.mode = mode;
        c.leakage_rate = match mode {
            AttackMode::KnownPlaintext => leak,
            AttackMode::CiphertextOnly => 0.0,
        };
        run_attack(&c, &plain, &cipher_manifest(&c))?;
    }

    for scheme in [Scheme::Mle, Scheme::MinHashScramble] {
        for cache in [base.small_cache, base.large_cache] {
            let mut c = ExperimentConfig { scheme, ..base.clone() };
            c.store.cache_capacity = cache;
            run_store(&c, &cipher_manifest(&c))?;
        }
    }

    compare(base, &CompareArgs { files: vec![] })
}

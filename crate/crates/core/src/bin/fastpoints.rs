use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use fastpoints::cloud_io::open_cloud;
use fastpoints::commands::{self, ConvertOptions, RenderOptions, StderrProgress};
use fastpoints::service::{serve, LiveBuild, LiveState, ServeConfig};
use fastpoints::{CancelToken, Error};

#[derive(Parser)]
#[command(name = "fastpoints", version, about = "Out-of-core point cloud LOD builder, renderer and server")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Decimate and build an octree directory from a PLY or LAS file.
    Convert {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        build: BuildFlags,
    },
    /// Print a summary of a built directory.
    Info { dir: PathBuf },
    /// Render one frame of a built directory to a PPM image.
    Render {
        dir: PathBuf,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        pos: Option<[f64; 3]>,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        look_at: Option<[f64; 3]>,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, default_value = "0,0,1")]
        up: [f64; 3],
        /// Vertical field of view in degrees.
        #[arg(long, default_value_t = 60.0)]
        fov: f64,
        /// Image size as WIDTHxHEIGHT.
        #[arg(long, value_parser = parse_size, default_value = "800x600")]
        size: (u32, u32),
        #[arg(long, default_value_t = 2_000_000)]
        budget: u64,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the rendered traversal plan as JSON.
        #[arg(long)]
        plan_json: Option<PathBuf>,
    },
    /// Serve a built directory, or build one from --input while serving.
    Serve {
        dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        no_cors: bool,
        #[arg(long, default_value_t = 16)]
        max_node_reads: usize,
        #[command(flatten)]
        build: BuildFlags,
    },
    /// Convert into a scratch directory and print per-phase wall times as CSV.
    Bench {
        input: PathBuf,
        /// Keep the output here instead of a temporary directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        build: BuildFlags,
    },
}

#[derive(Args, Clone)]
struct BuildFlags {
    #[arg(long, default_value_t = 1_000_000)]
    target_decimated: u64,
    #[arg(long, default_value_t = 200_000)]
    max_node_points: u64,
    #[arg(long, default_value_t = 4_000_000)]
    max_chunk_points: u64,
    /// Worker threads (default: FASTPOINTS_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 128)]
    grid_size: u32,
}

impl BuildFlags {
    fn options(&self, out: &Path) -> ConvertOptions {
        let mut o = ConvertOptions::new(out);
        o.decimation.target_count = self.target_decimated;
        o.build.max_node_points = self.max_node_points;
        o.build.max_chunk_points = self.max_chunk_points;
        o.build.sampling_grid_size = self.grid_size;
        match self.threads {
            Some(n) => o.with_workers(n),
            None => o,
        }
    }
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected x,y,z".to_string())
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    Ok((w.parse().map_err(|_| "bad width")?, h.parse().map_err(|_| "bad height")?))
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn interrupt_token() -> CancelToken {
    let token = CancelToken::new();
    let t = token.clone();
    let _ = ctrlc::set_handler(move || t.cancel());
    token
}

/// Opens an input cloud; any failure means the input is unusable (exit 2).
fn open_input(path: &Path) -> Result<fastpoints::cloud_io::CloudSource, ExitCode> {
    open_cloud(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.verb {
        Verb::Convert { input, out, build } => {
            let src = match open_input(&input) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let cancel = interrupt_token();
            let progress = StderrProgress::default();
            match commands::convert(&src, &build.options(&out), &progress, &cancel) {
                Ok(r) => {
                    eprintln!("PHASE Done 1.0000");
                    println!("points: {}, nodes: {}, depth: {}", r.hierarchy.total_points, r.hierarchy.len(), r.hierarchy.depth());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Verb::Info { dir } => match commands::info(&dir) {
            Ok(info) => {
                print!("{info}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(3)
            }
        },
        Verb::Render { dir, pos, look_at, up, fov, size, budget, out, plan_json } => {
            let opts = RenderOptions {
                position: pos,
                look_at,
                up,
                fov_degrees: fov,
                width: size.0,
                height: size.1,
                budget,
                ..RenderOptions::default()
            };
            let run = || -> fastpoints::Result<()> {
                let (img, plan) = commands::render(&dir, &opts)?;
                img.write_ppm(&out)?;
                if let Some(p) = &plan_json {
                    std::fs::write(p, serde_json::to_vec_pretty(&plan)?)?;
                }
                Ok(())
            };
            match run() {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
            }
        }
        Verb::Serve { dir, port, input, no_cors, max_node_reads, build } => {
            let cfg = ServeConfig {
                port,
                dir: dir.clone(),
                cors: !no_cors,
                max_concurrent_node_reads: max_node_reads,
            };
            let cancel = interrupt_token();
            let (live, job) = match input {
                Some(input) => {
                    let src = match open_input(&input) {
                        Ok(s) => s,
                        Err(code) => return code,
                    };
                    let live = Arc::new(LiveState::new());
                    match LiveBuild::spawn(live.clone(), src, build.options(&dir), cancel.clone()) {
                        Ok(job) => (live, Some(job)),
                        Err(e) => return fail(&e),
                    }
                }
                None => match LiveState::from_dir(&dir) {
                    Ok(l) => (Arc::new(l), None),
                    Err(e) => return fail(&e),
                },
            };
            let service = match serve(&cfg, live) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            eprintln!("serving {} on {}", dir.display(), service.url("/"));
            while !cancel.is_cancelled() {
                std::thread::sleep(Duration::from_millis(100));
            }
            service.stop();
            if let Some(job) = job {
                if let Err(e) = job.join() {
                    if !matches!(e, Error::Cancelled) {
                        eprintln!("build failed: {e}");
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Verb::Bench { input, out, build } => {
            let src = match open_input(&input) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let scratch = match &out {
                Some(_) => None,
                None => match tempdir_near(&input) {
                    Ok(d) => Some(d),
                    Err(e) => return fail(&e),
                },
            };
            let out_dir = out.clone().unwrap_or_else(|| scratch.as_ref().unwrap().join("octree"));
            let cancel = interrupt_token();
            let result = commands::bench(&src, &build.options(&out_dir), &cancel);
            if let Some(d) = scratch {
                let _ = std::fs::remove_dir_all(d);
            }
            match result {
                Ok(t) => {
                    print!("{}", t.to_csv());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}

fn tempdir_near(input: &Path) -> fastpoints::Result<PathBuf> {
    let base = std::env::temp_dir();
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = base.join(format!("fastpoints-bench-{stem}-{}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

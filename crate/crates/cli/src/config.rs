//! Run configuration: a `key = value` file plus command-line overrides.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use fiberann::diagnostics::DEFAULT_EDGES;
use fiberann::eval::Method;
use fiberann::WalkKind;

/// Comma-separated list parsed element-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<Vec<T>, String>>()
            .map(List)
    }
}

macro_rules! config {
    ($($field:ident: $ty:ty = $default:expr, $doc:literal;)*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct Config {
            $(#[doc = $doc] pub $field: $ty,)*
        }

        impl Default for Config {
            fn default() -> Self {
                Config { $($field: $default,)* }
            }
        }

        impl Config {
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($field) => {
                        self.$field = value
                            .parse()
                            .map_err(|e| anyhow!("config key `{key}`: cannot parse `{value}`: {e}"))?;
                    })*
                    _ => bail!("unknown config key `{key}`"),
                }
                Ok(())
            }
        }

        /// One flag per config field; a flag beats the config file.
        #[derive(Debug, Default, Clone, clap::Args)]
        pub struct Overrides {
            $(#[doc = $doc] #[arg(long, global = true)] pub $field: Option<$ty>,)*
        }

        impl Overrides {
            pub fn apply(&self, c: &mut Config) {
                $(if let Some(v) = &self.$field { c.$field = v.clone(); })*
            }
        }
    };
}

config! {
    vectors: PathBuf = PathBuf::new(), "Vector file (FANN)";
    metadata: PathBuf = PathBuf::new(), "Metadata file (JSON Lines)";
    graph: PathBuf = PathBuf::new(), "Graph file (FGRA)";
    atlas: PathBuf = PathBuf::new(), "Atlas file (FATL)";
    queries: PathBuf = PathBuf::new(), "Query file (JSON Lines)";
    ground_truth: PathBuf = PathBuf::new(), "Ground-truth file; computed by brute force when unset";
    out: PathBuf = PathBuf::new(), "Output directory";
    seed: u64 = 0, "Root seed";
    threads: usize = 0, "Worker threads, 0 for all cores";
    graph_k: usize = 64, "Neighbors per point in the kNN stage";
    max_degree: usize = 128, "Degree cap of the pruning stage";
    alpha: f64 = 1.2, "Pruning slack";
    clusters: usize = 0, "Atlas clusters, 0 for ceil(sqrt(n))";
    kmeans_iters: usize = 50, "Lloyd iterations";
    walk: WalkKind = WalkKind::Guided, "Walk used by `query` and `diagnose`";
    jumps: usize = 3, "Restarts after the first walk";
    cluster_budget: usize = 5, "Clusters consulted per restart";
    seed_budget: usize = 10, "Seeds per restart";
    beam_width: usize = 40, "Beam width of the beam walk";
    guided_beam_width: usize = 2, "Beam width of the guided walk";
    frontier_width: usize = 5, "Frontier width of the guided walk";
    stall_budget: usize = 100, "Expansions without a new match before giving up";
    max_hops: usize = 100, "Expansion cap per walk";
    diag_beam_width: usize = 4, "Beam width under `diagnose`";
    diag_max_hops: usize = 500, "Expansion cap under `diagnose`";
    methods: List<Method> = List(vec![Method::Guided, Method::Beam, Method::PostFilter]), "Methods run by `bench`";
    post_filter_multiplier: usize = 20, "Candidate multiplier of the post-filter baseline";
    bin_edges: List<f64> = List(DEFAULT_EDGES.to_vec()), "Selectivity bin edges";
    synth_n: usize = 20_000, "Synthetic points";
    synth_dim: usize = 32, "Synthetic dimension";
    synth_components: usize = 64, "Synthetic mixture components";
    synth_spread: f64 = 1.0, "Synthetic component spread";
    synth_queries_per_bin: usize = 200, "Synthetic queries per selectivity bin";
    synth_k: usize = 25, "Result count of synthetic queries";
}

impl Config {
    /// Parses `key = value` lines. Blank lines and `#` comments are skipped;
    /// values may be quoted.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |p| p.0).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key = value", i + 1))?;
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value);
            c.set(key.trim(), value)
                .with_context(|| format!("config line {}", i + 1))?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Config::parse(&text)
    }

    /// The path stored under `key`, or an error naming the missing key.
    pub fn require<'a>(&self, path: &'a Path, key: &str) -> Result<&'a Path> {
        if path.as_os_str().is_empty() {
            bail!("missing config key `{key}` (or --{})", key.replace('_', "-"));
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::default();
        assert_eq!((c.graph_k, c.max_degree, c.alpha), (64, 128, 1.2));
        assert_eq!((c.jumps, c.cluster_budget, c.seed_budget), (3, 5, 10));
        assert_eq!((c.beam_width, c.guided_beam_width, c.frontier_width), (40, 2, 5));
        assert_eq!((c.stall_budget, c.max_hops), (100, 100));
        assert_eq!((c.diag_beam_width, c.diag_max_hops), (4, 500));
    }

    #[test]
    fn parse_file() {
        let c = Config::parse("# run\nseed = 7\nwalk = beam  # trailing\nout = \"a b\"\n\nmethods = guided, post_filter\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.walk, WalkKind::Beam);
        assert_eq!(c.out, PathBuf::from("a b"));
        assert_eq!(c.methods.0, vec![Method::Guided, Method::PostFilter]);
        assert!(Config::parse("nope = 1").is_err());
        assert!(Config::parse("seed = x").is_err());
        assert!(Config::parse("seed").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut c = Config::parse("seed = 7\nalpha = 1.5").unwrap();
        let o = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        o.apply(&mut c);
        assert_eq!((c.seed, c.alpha), (9, 1.5));
    }
}

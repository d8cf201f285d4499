//! MNIST download helper.

use std::io::Read;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use synthgrad::data::{read_idx_images, read_idx_labels};

/// File name and expected item count of each standard IDX file.
const FILES: [(&str, usize); 4] = [
    ("train-images-idx3-ubyte.gz", 60_000),
    ("train-labels-idx1-ubyte.gz", 60_000),
    ("t10k-images-idx3-ubyte.gz", 10_000),
    ("t10k-labels-idx1-ubyte.gz", 10_000),
];

const MAX_BYTES: u64 = 64 << 20;

#[derive(Args)]
pub struct FetchArgs {
    /// URL prefix under which the four `.gz` files live.
    #[arg(long)]
    pub base_url: String,
    #[arg(long, default_value = "data/mnist")]
    pub out: PathBuf,
}

pub fn fetch_cmd(args: &FetchArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    for (name, count) in FILES {
        let url = format!("{}/{name}", args.base_url.trim_end_matches('/'));
        let mut resp = ureq::get(&url).call().with_context(|| format!("downloading {url}"))?;
        let declared = resp
            .headers()
            .get("content-length")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse::<usize>().ok());
        let mut bytes = Vec::new();
        resp.body_mut()
            .as_reader()
            .take(MAX_BYTES)
            .read_to_end(&mut bytes)
            .with_context(|| format!("reading {url}"))?;
        if let Some(n) = declared {
            if n != bytes.len() {
                bail!("{url}: received {} bytes, server declared {n}", bytes.len());
            }
        }
        let path = args.out.join(name);
        std::fs::write(&path, &bytes)?;
        let items = if name.contains("images") {
            read_idx_images(&path)?.rows()
        } else {
            read_idx_labels(&path)?.len()
        };
        if items != count {
            bail!("{name}: {items} items, expected {count}");
        }
        println!("{name}: {} bytes, {items} items", bytes.len());
    }
    Ok(())
}

use std::path::Path;

use anyhow::{anyhow, Context};
use serde::Deserialize;

use crate::args::{
    DecodeArgs, DetArgs, EvalArgs, FuseArgs, MbrArgs, ScoreArgs, SynthArgs, TrainArgs,
};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub synth_data: Option<SynthArgs>,
    pub train: Option<TrainArgs>,
    pub mbr_finetune: Option<MbrArgs>,
    pub decode: Option<DecodeArgs>,
    pub score: Option<ScoreArgs>,
    pub eval: Option<EvalArgs>,
    pub fuse: Option<FuseArgs>,
    pub det: Option<DetArgs>,
}

pub fn load(path: &Path) -> anyhow::Result<ConfigFile> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).map_err(|e| anyhow!("{}:{e}", path.display()))
}

/// Parses config text; errors read `line:column: message`.
pub fn parse(text: &str) -> Result<ConfigFile, String> {
    toml::from_str(text).map_err(|e| {
        let (line, col) = match e.span() {
            Some(span) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                (line, col)
            }
            None => (0, 0),
        };
        format!("{line}:{col}: {}", e.message().trim())
    })
}

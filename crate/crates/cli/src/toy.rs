//! The bundled toy dataset and dataset references in configurations.

use crate::error::CliError;
use simlearn::fenchel::Activation;
use simlearn::synth::{generate_dataset, Dataset, LabelModel, LabelSpace, MarginalSpec};
use std::path::Path;

/// Reference to the bundled dataset in `data.dataset`.
pub const BUNDLED_TOY: &str = "bundled:toy";
pub const TOY_TEXT: &str = include_str!("../data/toy.txt");
pub const TOY_N: usize = 200;
pub const TOY_SEED: u64 = 7;
pub const TOY_W: [f64; 3] = [1.0, -0.5, 0.25];

/// Regenerate the toy dataset from its recipe: three standard Gaussian
/// features and realizable sigmoid labels.
pub fn generate_toy() -> Dataset {
    let model = LabelModel::new(TOY_W.to_vec(), Activation::sigmoid(), LabelSpace::Interval);
    generate_dataset(&MarginalSpec::gaussian(3), &model, TOY_N, TOY_SEED).expect("toy recipe is valid")
}

/// Check that `text` is byte-identical to a fresh generation of the toy recipe.
pub fn check_integrity(text: &str) -> Result<(), String> {
    let expected = generate_toy().to_canonical_string();
    if text == expected {
        return Ok(());
    }
    let line = text.lines().zip(expected.lines()).position(|(a, b)| a != b);
    Err(match line {
        Some(i) => format!("bundled toy dataset differs from its recipe at line {}", i + 1),
        None => format!(
            "bundled toy dataset has {} lines, its recipe {}",
            text.lines().count(),
            expected.lines().count()
        ),
    })
}

/// Load `bundled:toy` or a dataset file.
pub fn resolve_dataset(reference: &str, base: Option<&Path>) -> Result<Dataset, CliError> {
    if reference == BUNDLED_TOY {
        return Ok(Dataset::parse(TOY_TEXT)?);
    }
    let path = match base {
        Some(dir) if Path::new(reference).is_relative() => dir.join(reference),
        _ => Path::new(reference).to_path_buf(),
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    Dataset::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

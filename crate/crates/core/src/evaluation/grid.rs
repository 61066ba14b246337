//! Hyperparameter grids as ordered axes of textual values.

use crate::error::{Error, Result};
use crate::learners::{Hyperparams, LearnerKind};

/// One grid dimension: a hyperparameter name and its candidate values.
pub type Axis = (String, Vec<String>);

/// The built-in grids. These values are a small, documented choice, not tuned ones.
pub fn default_axes(kind: LearnerKind) -> Vec<Axis> {
    let axis = |name: &str, values: &[&str]| (name.to_string(), values.iter().map(|v| v.to_string()).collect());
    match kind {
        LearnerKind::Lr => vec![axis("learning_rate", &["0.01", "0.1"]), axis("l2", &["1e-5", "1e-4"])],
        LearnerKind::Ert => vec![axis("n_trees", &["100", "300"]), axis("min_samples_leaf", &["1", "5"])],
        LearnerKind::Gbt => vec![
            axis("max_depth", &["4", "6"]),
            axis("learning_rate", &["0.05", "0.1"]),
            axis("rounds", &["200", "400"]),
        ],
    }
}

/// Cartesian product of `axes` applied on top of `base`.
///
/// Configs are listed with the first axis varying slowest; this is also the
/// tie-breaking order of model selection.
pub fn expand_grid(base: &Hyperparams, axes: &[Axis]) -> Result<Vec<Hyperparams>> {
    if let Some((name, _)) = axes.iter().find(|(_, values)| values.is_empty()) {
        return Err(Error::InvalidHyperparameter(format!(
            "grid axis `{name}` has no values"
        )));
    }
    let mut configs = vec![base.clone()];
    for (name, values) in axes {
        let mut next = Vec::with_capacity(configs.len() * values.len());
        for config in &configs {
            for value in values {
                let mut c = config.clone();
                c.set(name, value)?;
                next.push(c);
            }
        }
        configs = next;
    }
    Ok(configs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::GbtParams;

    #[test]
    fn default_grid_sizes() {
        let sizes: Vec<usize> = LearnerKind::ALL
            .iter()
            .map(|&k| expand_grid(&k.default_params(), &default_axes(k)).unwrap().len())
            .collect();
        assert_eq!(sizes, vec![4, 4, 8]);
    }

    #[test]
    fn first_axis_varies_slowest() {
        let axes = vec![
            ("max_depth".to_string(), vec!["2".to_string(), "3".to_string()]),
            ("rounds".to_string(), vec!["5".to_string(), "6".to_string()]),
        ];
        let grid = expand_grid(&LearnerKind::Gbt.default_params(), &axes).unwrap();
        let pairs: Vec<(usize, usize)> = grid
            .iter()
            .map(|h| match h {
                Hyperparams::Gbt(GbtParams { max_depth, rounds, .. }) => (*max_depth, *rounds),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(pairs, vec![(2, 5), (2, 6), (3, 5), (3, 6)]);
    }

    #[test]
    fn no_axes_is_the_base_config() {
        let base = LearnerKind::Lr.default_params();
        assert_eq!(expand_grid(&base, &[]).unwrap(), vec![base]);
    }

    #[test]
    fn bad_axes_are_rejected() {
        let base = LearnerKind::Lr.default_params();
        assert!(expand_grid(&base, &[("l2".into(), vec![])]).is_err());
        assert!(expand_grid(&base, &[("depth".into(), vec!["3".into()])]).is_err());
    }
}

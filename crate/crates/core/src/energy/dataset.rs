use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::tanh_net::{network_output, Neuron};
use crate::error::{Error, Result};

/// Scalar regression dataset `{(x_i, y_i)}` with the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub seed: u64,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, seed: u64) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::config("dataset needs at least one sample"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::config(format!(
                "dataset has {} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(Self {
            inputs,
            targets,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Writes `# seed=<seed>`, a `x,y` header, then one row per sample using
    /// shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# seed={}", self.seed)?;
        writeln!(out, "x,y")?;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            writeln!(out, "{x},{y}")?;
        }
        Ok(())
    }
}

/// Draws `n` standard-normal inputs from a ChaCha8 stream seeded with `seed`
/// and labels them with the teacher network.
pub fn generate_dataset(seed: u64, n: usize, teacher: &[Neuron]) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::config("dataset size n must be >= 1"));
    }
    if teacher.is_empty() {
        return Err(Error::config("teacher network needs at least one neuron"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let targets = inputs.iter().map(|&x| network_output(teacher, x)).collect();
    Dataset::new(inputs, targets, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn teacher() -> Vec<Neuron> {
        vec![Neuron::new(1.0, 2.0, -0.5), Neuron::new(-0.7, 0.8, 0.3)]
    }

    #[test]
    fn fifteen_samples_with_exact_teacher_targets() {
        let ds = generate_dataset(2024, 15, &teacher()).unwrap();
        assert_eq!(ds.len(), 15);
        for (x, y) in ds.inputs.iter().zip(&ds.targets) {
            let expect = 1.0 * (2.0 * x - 0.5f64).tanh() + -0.7 * (0.8 * x + 0.3f64).tanh();
            assert_eq!(*y, expect);
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_dataset(5, 15, &teacher()).unwrap();
        let b = generate_dataset(5, 15, &teacher()).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(6, 15, &teacher()).unwrap();
        assert_ne!(a.inputs, c.inputs);
    }

    #[test]
    fn zero_teacher_gives_zero_targets() {
        let t = vec![Neuron::new(0.0, 1.0, 1.0), Neuron::new(0.0, -2.0, 0.5)];
        let ds = generate_dataset(1, 10, &t).unwrap();
        assert!(ds.targets.iter().all(|y| *y == 0.0));
    }

    #[test]
    fn rejects_empty_requests() {
        assert!(generate_dataset(1, 0, &teacher()).is_err());
        assert!(generate_dataset(1, 3, &[]).is_err());
    }

    #[test]
    fn csv_has_seed_header() {
        let ds = Dataset::new(vec![0.5, -1.25], vec![0.1, 2.0], 42).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# seed=42\nx,y\n0.5,0.1\n-1.25,2\n"
        );
    }
}

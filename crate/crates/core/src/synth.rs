//! Seeded generators for symmetric sequence windows.
//!
//! Positives are fixed points of a permutation action (mirror palindromes
//! under index reversal, periodic windows under a shift); negatives are
//! drawn uniformly and rejected until they break that symmetry. Symbols are
//! alphabet indices; the DNA alphabet maps `A, C, G, T` to `0..4`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::groups::FiniteGroup;
use crate::numerics::{Matrix, Rng};

pub const DNA_ALPHABET: [char; 4] = ['A', 'C', 'G', 'T'];

/// Index of a DNA base, case-sensitive.
pub fn dna_index(base: char) -> Option<usize> {
    DNA_ALPHABET.iter().position(|&c| c == base)
}

/// Parses a DNA string; the error names the first offending character.
pub fn parse_dna(seq: &str) -> Result<Vec<usize>> {
    seq.chars()
        .map(|c| {
            dna_index(c).ok_or_else(|| {
                Error::invalid(format!(
                    "invalid DNA base '{c}' (expected one of A, C, G, T)"
                ))
            })
        })
        .collect()
}

/// Symbols rendered over `A, C, G, T` when the alphabet fits, otherwise as
/// lowercase letters from `a`.
pub fn render_symbols(symbols: &[usize], alphabet_size: usize) -> String {
    symbols
        .iter()
        .map(|&s| {
            if alphabet_size <= DNA_ALPHABET.len() {
                DNA_ALPHABET[s]
            } else {
                (b'a' + s as u8) as char
            }
        })
        .collect()
}

/// Inverse of [`render_symbols`].
pub fn parse_symbols(text: &str, alphabet_size: usize) -> Result<Vec<usize>> {
    if alphabet_size <= DNA_ALPHABET.len() {
        let symbols = parse_dna(text)?;
        if let Some(&s) = symbols.iter().find(|&&s| s >= alphabet_size) {
            return Err(Error::invalid(format!(
                "symbol {s} outside alphabet of size {alphabet_size}"
            )));
        }
        return Ok(symbols);
    }
    text.chars()
        .map(|c| {
            let s = (c as u32).wrapping_sub('a' as u32) as usize;
            if s < alphabet_size {
                Ok(s)
            } else {
                Err(Error::invalid(format!("invalid symbol '{c}'")))
            }
        })
        .collect()
}

/// `k x alphabet_size` one-hot rows.
pub fn encode_onehot(symbols: &[usize], alphabet_size: usize) -> Result<Matrix> {
    if symbols.is_empty() || alphabet_size == 0 {
        return Err(Error::invalid(
            "one-hot encoding needs a nonempty window and alphabet",
        ));
    }
    let mut m = Matrix::zeros(symbols.len(), alphabet_size);
    for (i, &s) in symbols.iter().enumerate() {
        if s >= alphabet_size {
            return Err(Error::invalid(format!(
                "symbol {s} outside alphabet of size {alphabet_size}"
            )));
        }
        m.set(i, s, 1.0)?;
    }
    Ok(m)
}

/// How a window was produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Generator {
    Palindrome,
    NonPalindrome,
    /// Periodic window, `symbols[i] = base[i % period]`.
    Cyclic {
        period: usize,
    },
    /// Uniform window that is not periodic with `period`.
    NonCyclic {
        period: usize,
    },
}

/// Generator plus the resampling probability applied afterwards, if any.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowMeta {
    pub generator: Generator,
    pub noise: Option<f64>,
}

impl fmt::Display for WindowMeta {
    /// `palindrome`, `cyclic:3`, `nonpalindrome+noise:0.1`, ...
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.generator {
            Generator::Palindrome => f.write_str("palindrome")?,
            Generator::NonPalindrome => f.write_str("nonpalindrome")?,
            Generator::Cyclic { period } => write!(f, "cyclic:{period}")?,
            Generator::NonCyclic { period } => write!(f, "noncyclic:{period}")?,
        }
        if let Some(p) = self.noise {
            write!(f, "+noise:{p}")?;
        }
        Ok(())
    }
}

impl core::str::FromStr for WindowMeta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unrecognised window meta '{s}'"));
        let (gen, noise) = match s.split_once("+noise:") {
            Some((g, p)) => (g, Some(p.parse::<f64>().map_err(|_| bad())?)),
            None => (s, None),
        };
        let period = |p: &str| p.parse::<usize>().map_err(|_| bad());
        let generator = match gen.split_once(':') {
            None if gen == "palindrome" => Generator::Palindrome,
            None if gen == "nonpalindrome" => Generator::NonPalindrome,
            Some(("cyclic", p)) => Generator::Cyclic { period: period(p)? },
            Some(("noncyclic", p)) => Generator::NonCyclic { period: period(p)? },
            _ => return Err(bad()),
        };
        Ok(WindowMeta { generator, noise })
    }
}

/// One labelled window with its encoded features.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceWindow {
    pub symbols: Vec<usize>,
    pub features: Matrix,
    pub label: u8,
    pub alphabet_size: usize,
    pub meta: WindowMeta,
}

impl SequenceWindow {
    pub fn new(
        symbols: Vec<usize>,
        alphabet_size: usize,
        label: u8,
        meta: WindowMeta,
    ) -> Result<Self> {
        let features = encode_onehot(&symbols, alphabet_size)?;
        Ok(SequenceWindow {
            symbols,
            features,
            label,
            alphabet_size,
            meta,
        })
    }

    pub fn window(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_mirror_palindrome(&self) -> bool {
        is_mirror_palindrome(&self.symbols)
    }
}

pub fn is_mirror_palindrome(symbols: &[usize]) -> bool {
    symbols.iter().eq(symbols.iter().rev())
}

pub fn is_periodic(symbols: &[usize], period: usize) -> bool {
    period > 0 && (period..symbols.len()).all(|i| symbols[i] == symbols[i - period])
}

fn check_alphabet(alphabet_size: usize) -> Result<()> {
    if alphabet_size == 0 || alphabet_size > 26 {
        return Err(Error::invalid(format!(
            "alphabet size {alphabet_size} outside 1..=26"
        )));
    }
    Ok(())
}

fn uniform_symbols(k: usize, alphabet_size: usize, rng: &mut Rng) -> Vec<usize> {
    (0..k).map(|_| rng.below(alphabet_size)).collect()
}

/// Mirror palindrome with the free half drawn uniformly; label 1.
pub fn gen_palindrome(k: usize, alphabet_size: usize, rng: &mut Rng) -> Result<SequenceWindow> {
    if k < 2 {
        return Err(Error::invalid("palindromes need k >= 2"));
    }
    check_alphabet(alphabet_size)?;
    let mut symbols = vec![0; k];
    for i in 0..k.div_ceil(2) {
        let s = rng.below(alphabet_size);
        symbols[i] = s;
        symbols[k - 1 - i] = s;
    }
    SequenceWindow::new(
        symbols,
        alphabet_size,
        1,
        WindowMeta {
            generator: Generator::Palindrome,
            noise: None,
        },
    )
}

/// Uniform window resampled until some mirror pair differs; label 0.
pub fn gen_nonpalindrome(k: usize, alphabet_size: usize, rng: &mut Rng) -> Result<SequenceWindow> {
    if k < 2 || alphabet_size < 2 {
        return Err(Error::invalid(
            "non-palindromes need k >= 2 and at least two symbols",
        ));
    }
    check_alphabet(alphabet_size)?;
    let symbols = loop {
        let s = uniform_symbols(k, alphabet_size, rng);
        if !is_mirror_palindrome(&s) {
            break s;
        }
    };
    SequenceWindow::new(
        symbols,
        alphabet_size,
        0,
        WindowMeta {
            generator: Generator::NonPalindrome,
            noise: None,
        },
    )
}

/// Periodic window `base[i % period]` with a uniform base; label 1.
pub fn gen_cyclic(
    k: usize,
    period: usize,
    alphabet_size: usize,
    rng: &mut Rng,
) -> Result<SequenceWindow> {
    if period == 0 || k == 0 || !k.is_multiple_of(period) {
        return Err(Error::invalid(format!(
            "period {period} does not divide window {k}"
        )));
    }
    check_alphabet(alphabet_size)?;
    let base = uniform_symbols(period, alphabet_size, rng);
    let symbols = (0..k).map(|i| base[i % period]).collect();
    SequenceWindow::new(
        symbols,
        alphabet_size,
        1,
        WindowMeta {
            generator: Generator::Cyclic { period },
            noise: None,
        },
    )
}

/// Uniform window that is not periodic with `period`; label 0.
pub fn gen_noncyclic(
    k: usize,
    period: usize,
    alphabet_size: usize,
    rng: &mut Rng,
) -> Result<SequenceWindow> {
    if period == 0 || period >= k || !k.is_multiple_of(period) || alphabet_size < 2 {
        return Err(Error::invalid(format!(
            "non-periodic windows need a proper divisor period ({period} of {k}) and two symbols"
        )));
    }
    check_alphabet(alphabet_size)?;
    let symbols = loop {
        let s = uniform_symbols(k, alphabet_size, rng);
        if !is_periodic(&s, period) {
            break s;
        }
    };
    SequenceWindow::new(
        symbols,
        alphabet_size,
        0,
        WindowMeta {
            generator: Generator::NonCyclic { period },
            noise: None,
        },
    )
}

/// Resamples each position uniformly with probability `p`. The label is
/// kept from the source window even if the symmetry is broken.
pub fn perturb(w: &SequenceWindow, p: f64, rng: &mut Rng) -> Result<SequenceWindow> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "perturbation probability {p} outside [0, 1]"
        )));
    }
    let symbols = w
        .symbols
        .iter()
        .map(|&s| {
            if rng.bernoulli(p) {
                rng.below(w.alphabet_size)
            } else {
                s
            }
        })
        .collect();
    SequenceWindow::new(
        symbols,
        w.alphabet_size,
        w.label,
        WindowMeta {
            generator: w.meta.generator,
            noise: Some(p),
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    /// Mirror palindromes vs. the rest.
    Palindrome,
    /// Windows periodic with `period` vs. the rest.
    Cyclic { period: usize },
}

impl Task {
    /// The group whose fixed points are this task's positives.
    pub fn symmetry_group(&self, k: usize) -> Result<FiniteGroup> {
        match *self {
            Task::Palindrome => FiniteGroup::mirror(k),
            Task::Cyclic { period } => {
                if period == 0 || !k.is_multiple_of(period) {
                    return Err(Error::invalid(format!(
                        "period {period} does not divide window {k}"
                    )));
                }
                FiniteGroup::cyclic_shift(k / period, k)
            }
        }
    }

    /// Default period for the cyclic task: the largest proper divisor of `k`.
    pub fn default_cyclic(k: usize) -> Result<Task> {
        (1..k)
            .rev()
            .find(|&p| k.is_multiple_of(p) && p < k)
            .map(|period| Task::Cyclic { period })
            .ok_or_else(|| Error::invalid(format!("window {k} has no proper divisor")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetSpec {
    pub task: Task,
    /// Total number of windows (train + validation).
    pub n: usize,
    pub k: usize,
    pub noise_p: f64,
    pub seed: u64,
    pub alphabet_size: usize,
}

impl DatasetSpec {
    pub fn palindrome(n: usize, k: usize, noise_p: f64, seed: u64) -> Self {
        DatasetSpec {
            task: Task::Palindrome,
            n,
            k,
            noise_p,
            seed,
            alphabet_size: DNA_ALPHABET.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<SequenceWindow>,
    pub validation: Vec<SequenceWindow>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Balanced, shuffled dataset split 80/20 into train and validation.
///
/// `n / 2` (rounded up) positives and the rest negatives; with `noise_p > 0`
/// every window is passed through [`perturb`].
pub fn make_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    if spec.n < 2 {
        return Err(Error::invalid("datasets need at least two windows"));
    }
    let mut rng = Rng::new(spec.seed);
    let positives = spec.n.div_ceil(2);
    let mut windows = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let positive = i < positives;
        let w = match (spec.task, positive) {
            (Task::Palindrome, true) => gen_palindrome(spec.k, spec.alphabet_size, &mut rng)?,
            (Task::Palindrome, false) => gen_nonpalindrome(spec.k, spec.alphabet_size, &mut rng)?,
            (Task::Cyclic { period }, true) => {
                gen_cyclic(spec.k, period, spec.alphabet_size, &mut rng)?
            }
            (Task::Cyclic { period }, false) => {
                gen_noncyclic(spec.k, period, spec.alphabet_size, &mut rng)?
            }
        };
        let w = if spec.noise_p > 0.0 {
            perturb(&w, spec.noise_p, &mut rng)?
        } else {
            w
        };
        windows.push(w);
    }
    rng.shuffle(&mut windows);
    let n_train = spec.n * 4 / 5;
    let validation = windows.split_off(n_train);
    Ok(Dataset {
        train: windows,
        validation,
    })
}

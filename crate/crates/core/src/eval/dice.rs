use crate::error::{Error, Result};

/// Streaming Dice over plane pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DiceAccumulator {
    pub intersection: u64,
    pub a: u64,
    pub b: u64,
}

impl DiceAccumulator {
    pub fn push(&mut self, a: &[bool], b: &[bool]) -> Result<()> {
        if a.len() != b.len() {
            return Err(Error::InvalidArgument(format!("mask planes differ in size: {} vs {}", a.len(), b.len())));
        }
        for (&x, &y) in a.iter().zip(b) {
            self.a += x as u64;
            self.b += y as u64;
            self.intersection += (x && y) as u64;
        }
        Ok(())
    }

    /// `2|A∩B| / (|A|+|B|)`; two empty masks score 1.
    pub fn value(&self) -> f64 {
        if self.a + self.b == 0 {
            1.0
        } else {
            2.0 * self.intersection as f64 / (self.a + self.b) as f64
        }
    }
}

pub fn dice_masks(a: &[bool], b: &[bool]) -> Result<f64> {
    let mut acc = DiceAccumulator::default();
    acc.push(a, b)?;
    Ok(acc.value())
}

/// Dice of two z-ordered plane streams; both must yield the same number of equal-sized planes.
pub fn dice<A, B>(a: A, b: B) -> Result<f64>
where
    A: IntoIterator<Item = Result<Vec<bool>>>,
    B: IntoIterator<Item = Result<Vec<bool>>>,
{
    let mut acc = DiceAccumulator::default();
    let (mut a, mut b) = (a.into_iter(), b.into_iter());
    loop {
        match (a.next(), b.next()) {
            (None, None) => return Ok(acc.value()),
            (Some(x), Some(y)) => acc.push(&x?, &y?)?,
            _ => return Err(Error::InvalidArgument("mask streams differ in plane count".into())),
        }
    }
}

//! Offset removal and the M-branch synthesis filter bank.
//!
//! Branch `m` filters the zero-stuffed stream of channel `m` (its samples left
//! at their interleaved positions) and the branch outputs are summed, which
//! collapses to a periodically time-varying FIR:
//! `y[n] = sum_p f_{(n-p) mod M}[p] * x[n-p]`.

use crate::design::FilterBank;
use crate::error::{Error, Result};
use crate::model::{Capture, CorrectionInfo, MismatchProfile};

/// Subtracts each channel's calibrated offset.
pub fn correct_offsets(capture: &Capture, profile: &MismatchProfile) -> Result<Capture> {
    let m_ch = capture.config.m_channels;
    if capture.is_empty() || !capture.len().is_multiple_of(m_ch) {
        return Err(Error::NotMultiple {
            len: capture.len(),
            m: m_ch,
        });
    }
    if profile.m_channels() != m_ch {
        return Err(Error::ChannelMismatch {
            capture: m_ch,
            bank: profile.m_channels(),
        });
    }
    let lsb = capture.config.lsb();
    let offsets: Vec<f64> = (0..m_ch).map(|m| profile.offset_lsb(m) * lsb).collect();
    let mut out = capture.clone();
    for (n, v) in out.samples.iter_mut().enumerate() {
        *v -= offsets[n % m_ch];
    }
    Ok(out)
}

/// Streaming form of the bank. Feeding a capture in arbitrary chunks yields
/// exactly the same samples as one call over the whole record.
#[derive(Debug, Clone)]
pub struct BankFilter<'a> {
    bank: &'a FilterBank,
    /// The last `L-1` inputs, oldest first.
    history: Vec<f64>,
    /// Absolute index of the next input sample.
    position: usize,
}

impl<'a> BankFilter<'a> {
    pub fn new(bank: &'a FilterBank) -> Self {
        BankFilter {
            bank,
            history: vec![0.0; bank.len().saturating_sub(1)],
            position: 0,
        }
    }

    pub fn process(&mut self, input: &[f64]) -> Vec<f64> {
        let l = self.bank.len();
        let m_ch = self.bank.m_channels;
        let keep = l - 1;
        let mut buf = Vec::with_capacity(keep + input.len());
        buf.extend_from_slice(&self.history);
        buf.extend_from_slice(input);
        let mut out = Vec::with_capacity(input.len());
        for j in 0..input.len() {
            let n = self.position + j;
            let base = keep + j;
            let mut acc = 0.0;
            for p in 0..l {
                // channel of the input sample that tap p multiplies
                let m = (n + m_ch * l - p) % m_ch;
                acc += self.bank.taps[m][p] * buf[base - p];
            }
            out.push(acc);
        }
        self.history.copy_from_slice(&buf[buf.len() - keep..]);
        self.position += input.len();
        out
    }
}

/// Default block size for [`correct`].
pub const BLOCK: usize = 4096;

/// Applies the bank to a capture. The output has the input's length, is
/// delayed by `d` samples and flags `L` transient samples at each end.
pub fn correct(capture: &Capture, bank: &FilterBank) -> Result<Capture> {
    correct_blocked(capture, bank, BLOCK)
}

/// [`correct`] with an explicit processing block size.
pub fn correct_blocked(capture: &Capture, bank: &FilterBank, block: usize) -> Result<Capture> {
    if capture.config.m_channels != bank.m_channels {
        return Err(Error::ChannelMismatch {
            capture: capture.config.m_channels,
            bank: bank.m_channels,
        });
    }
    if capture.len() < bank.len() {
        return Err(Error::CaptureTooShort {
            len: capture.len(),
            need: bank.len(),
        });
    }
    let mut filter = BankFilter::new(bank);
    let mut samples = Vec::with_capacity(capture.len());
    for chunk in capture.samples.chunks(block.max(1)) {
        samples.extend(filter.process(chunk));
    }
    Ok(Capture {
        samples,
        config: capture.config,
        transient: bank.len().max(capture.transient),
        correction: Some(CorrectionInfo {
            bank_id: bank.id(),
            delay_samples: bank.spec.delay,
        }),
    })
}

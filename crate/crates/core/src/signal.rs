//! Elementary signal operations: recordings, zero-phase Butterworth band-pass
//! filtering, fixed-length epoch segmentation and Welch band power.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView1, Axis};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Length of one scored sleep epoch.
pub const EPOCH_SECONDS: f64 = 30.0;

/// Prototype order of the band-pass filter (the digital filter has twice as
/// many poles).
pub const FILTER_ORDER: usize = 4;

/// Pass band applied to every scalp and ear channel.
pub const PREPROCESS_BAND: (f64, f64) = (0.2, 42.0);

/// Multichannel time series, samples along rows and channels along columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    channel_ids: Vec<String>,
    data: Array2<f64>,
    sample_rate: f64,
}

impl Recording {
    pub fn new(channel_ids: Vec<String>, data: Array2<f64>, sample_rate: f64) -> Result<Self> {
        if data.ncols() != channel_ids.len() {
            return Err(Error::ShapeError(format!(
                "{} data columns for {} channel ids",
                data.ncols(),
                channel_ids.len()
            )));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidConfig(format!("sample rate {sample_rate}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeError("non-finite sample".into()));
        }
        Ok(Self {
            channel_ids,
            data,
            sample_rate,
        })
    }

    /// Builds a recording from per-channel sample vectors of equal length.
    pub fn from_channels(channels: Vec<(String, Vec<f64>)>, sample_rate: f64) -> Result<Self> {
        let len = channels.first().map_or(0, |(_, v)| v.len());
        if channels.iter().any(|(_, v)| v.len() != len) {
            return Err(Error::ShapeError("channels differ in length".into()));
        }
        let mut data = Array2::zeros((len, channels.len()));
        for (c, (_, values)) in channels.iter().enumerate() {
            data.column_mut(c)
                .iter_mut()
                .zip(values)
                .for_each(|(d, v)| *d = *v);
        }
        let ids = channels.into_iter().map(|(name, _)| name).collect();
        Self::new(ids, data, sample_rate)
    }

    pub fn channel_ids(&self) -> &[String] {
        &self.channel_ids
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn num_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_ids.iter().position(|c| c == name)
    }

    pub fn channel(&self, name: &str) -> Result<ArrayView1<'_, f64>> {
        self.channel_index(name)
            .map(|i| self.data.column(i))
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    /// Applies `f` to every channel independently.
    pub fn map_channels<F>(&self, mut f: F) -> Result<Recording>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let mut out = Array2::zeros(self.data.raw_dim());
        for (c, column) in self.data.axis_iter(Axis(1)).enumerate() {
            let filtered = f(&column.to_vec())?;
            if filtered.len() != self.num_samples() {
                return Err(Error::ShapeError("channel map changed length".into()));
            }
            out.column_mut(c)
                .iter_mut()
                .zip(filtered)
                .for_each(|(d, v)| *d = v);
        }
        Recording::new(self.channel_ids.clone(), out, self.sample_rate)
    }
}

/// One fixed-length window `[T × C]` cut from a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTensor {
    pub data: Array2<f64>,
}

impl EpochTensor {
    pub fn num_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_channels(&self) -> usize {
        self.data.ncols()
    }
}

/// Number of samples in an epoch of `seconds` at `sample_rate`.
pub fn epoch_len(sample_rate: f64, seconds: f64) -> usize {
    (seconds * sample_rate).round() as usize
}

/// Cuts the recording into consecutive non-overlapping epochs; trailing
/// samples that do not fill an epoch are discarded.
pub fn segment_epochs(recording: &Recording, epoch_seconds: f64) -> Result<Vec<EpochTensor>> {
    let len = epoch_len(recording.sample_rate(), epoch_seconds);
    if len == 0 || recording.num_samples() < len {
        return Err(Error::EmptyResult);
    }
    let count = recording.num_samples() / len;
    Ok((0..count)
        .map(|i| EpochTensor {
            data: recording
                .data()
                .slice(s![i * len..(i + 1) * len, ..])
                .to_owned(),
        })
        .collect())
}

/// Second-order section in direct form II transposed, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + self.b[1] * z_inv + self.b[2] * z2;
        let den = self.a[0] + self.a[1] * z_inv + self.a[2] * z2;
        num / den
    }

    /// State that keeps the output constant for a unit constant input.
    fn steady_state(&self) -> [f64; 2] {
        let gain = self.dc_gain();
        [
            self.b[1] + self.b[2] - (self.a[1] + self.a[2]) * gain,
            self.b[2] - self.a[2] * gain,
        ]
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    fn run(&self, x: &mut [f64], mut state: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + state[0];
            state[0] = b1 * input - a1 * y + state[1];
            state[1] = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// Digital Butterworth band-pass as a cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandpass {
    sections: Vec<Biquad>,
    low: f64,
    high: f64,
    sample_rate: f64,
}

impl Bandpass {
    /// Designs an analog Butterworth low-pass prototype of `order`, maps it to
    /// a band-pass and discretises it with the prewarped bilinear transform.
    pub fn butterworth(order: usize, low: f64, high: f64, sample_rate: f64) -> Result<Self> {
        let nyquist = sample_rate / 2.0;
        if !(low > 0.0 && low < high && high < nyquist) {
            return Err(Error::InvalidBand {
                low,
                high,
                sample_rate,
            });
        }
        assert!(order >= 2 && order % 2 == 0, "order must be even");

        let fs2 = 2.0 * sample_rate;
        let warp = |f: f64| fs2 * (std::f64::consts::PI * f / sample_rate).tan();
        let (w1, w2) = (warp(low), warp(high));
        let bw = w2 - w1;
        let w0_sq = w1 * w2;

        let mut poles = Vec::with_capacity(2 * order);
        for k in 0..order {
            let theta =
                std::f64::consts::PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            let proto = Complex64::from_polar(1.0, theta);
            let half = proto * (bw / 2.0);
            let root = (half * half - w0_sq).sqrt();
            for s in [half + root, half - root] {
                poles.push((fs2 + s) / (fs2 - s));
            }
        }
        // one representative per conjugate pair
        let mut upper: Vec<Complex64> = poles.into_iter().filter(|p| p.im > 0.0).collect();
        upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        assert_eq!(upper.len(), order, "band-pass poles must pair up");

        let mut sections: Vec<Biquad> = upper
            .iter()
            .map(|p| Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -2.0 * p.re, p.norm_sqr()],
            })
            .collect();

        let center = 2.0 * (w0_sq.sqrt() / fs2).atan();
        let z_inv = Complex64::from_polar(1.0, -center);
        let gain: Complex64 = sections.iter().map(|s| s.response(z_inv)).product();
        let per_section = gain.norm().powf(-1.0 / order as f64);
        for section in &mut sections {
            section.b.iter_mut().for_each(|b| *b *= per_section);
        }
        Ok(Self {
            sections,
            low,
            high,
            sample_rate,
        })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn band(&self) -> (f64, f64) {
        (self.low, self.high)
    }

    /// Complex response of one causal pass at `freq` Hz.
    pub fn response(&self, freq: f64) -> Complex64 {
        let omega = 2.0 * std::f64::consts::PI * freq / self.sample_rate;
        let z_inv = Complex64::from_polar(1.0, -omega);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    /// Magnitude of one causal pass in dB.
    pub fn gain_db(&self, freq: f64) -> f64 {
        20.0 * self.response(freq).norm().log10()
    }

    /// Edge padding used by [`Bandpass::filtfilt`].
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Causal pass with zero initial state.
    pub fn filter(&self, signal: &[f64]) -> Vec<f64> {
        let mut out = signal.to_vec();
        for section in &self.sections {
            section.run(&mut out, [0.0, 0.0]);
        }
        out
    }

    /// Forward-backward filtering with odd edge extension and steady-state
    /// initial conditions, giving zero phase and a squared magnitude response.
    pub fn filtfilt(&self, signal: &[f64]) -> Result<Vec<f64>> {
        let pad = self.pad_len();
        let n = signal.len();
        if n <= pad {
            return Err(Error::SignalTooShort { len: n, min: pad });
        }
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (signal[0], signal[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
        ext.extend_from_slice(signal);
        ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));

        self.run_with_steady_state(&mut ext);
        ext.reverse();
        self.run_with_steady_state(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }

    fn run_with_steady_state(&self, x: &mut [f64]) {
        let x0 = x[0];
        let mut scale = 1.0;
        for section in &self.sections {
            let zi = section.steady_state();
            section.run(x, [zi[0] * scale * x0, zi[1] * scale * x0]);
            scale *= section.dc_gain();
        }
    }
}

/// Zero-phase Butterworth band-pass of [`FILTER_ORDER`].
pub fn bandpass_filter(signal: &[f64], sample_rate: f64, low: f64, high: f64) -> Result<Vec<f64>> {
    Bandpass::butterworth(FILTER_ORDER, low, high, sample_rate)?.filtfilt(signal)
}

/// Welch estimate of the one-sided power spectral density (µV²/Hz): 2 s
/// periodic Hann windows, 50 % overlap, per-segment mean removal.
#[derive(Clone)]
pub struct Welch {
    window: Vec<f64>,
    window_power: f64,
    sample_rate: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl Welch {
    pub const WINDOW_SECONDS: f64 = 2.0;

    pub fn new(sample_rate: f64) -> Self {
        let n = epoch_len(sample_rate, Self::WINDOW_SECONDS).max(2);
        let window: Vec<f64> = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let window_power = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Self {
            window,
            window_power,
            sample_rate,
            fft,
        }
    }

    pub fn segment_len(&self) -> usize {
        self.window.len()
    }

    pub fn resolution(&self) -> f64 {
        self.sample_rate / self.segment_len() as f64
    }

    /// PSD at bins `k · resolution` for `k = 0..=n/2`.
    pub fn psd(&self, signal: &[f64]) -> Result<Vec<f64>> {
        let n = self.segment_len();
        if signal.len() < n {
            return Err(Error::SignalTooShort {
                len: signal.len(),
                min: n,
            });
        }
        let hop = n / 2;
        let bins = n / 2 + 1;
        let mut acc = vec![0.0; bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut segments = 0usize;
        let mut start = 0;
        while start + n <= signal.len() {
            let seg = &signal[start..start + n];
            let mean = seg.iter().sum::<f64>() / n as f64;
            for ((b, x), w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new((x - mean) * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
            segments += 1;
            start += hop;
        }
        let norm = 1.0 / (self.sample_rate * self.window_power * segments as f64);
        for (k, a) in acc.iter_mut().enumerate() {
            let one_sided = if k == 0 || (n % 2 == 0 && k == n / 2) {
                1.0
            } else {
                2.0
            };
            *a *= norm * one_sided;
        }
        Ok(acc)
    }

    /// Power in `[low, high]` Hz: the PSD summed over bins inside the band
    /// times the bin width.
    pub fn band_power(&self, signal: &[f64], low: f64, high: f64) -> Result<f64> {
        if !(low >= 0.0 && low < high && high <= self.sample_rate / 2.0) {
            return Err(Error::InvalidBand {
                low,
                high,
                sample_rate: self.sample_rate,
            });
        }
        let psd = self.psd(signal)?;
        let df = self.resolution();
        Ok(psd
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = *k as f64 * df;
                f >= low && f <= high
            })
            .map(|(_, p)| p * df)
            .sum())
    }
}

pub fn band_power(signal: &[f64], sample_rate: f64, low: f64, high: f64) -> Result<f64> {
    Welch::new(sample_rate).band_power(signal, low, high)
}

use std::path::Path;

use serde::Deserialize;

use crate::error::{HlfError, Result};

/// RGB responsivity of a colour camera as a function of wavelength,
/// linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSpectralResponse {
    samples: Vec<(f64, [f64; 3])>,
}

#[derive(Debug, Deserialize)]
struct Row {
    #[serde(alias = "lambda", alias = "nm", alias = "wavelength")]
    lambda: f64,
    r: f64,
    g: f64,
    b: f64,
}

impl CameraSpectralResponse {
    pub fn new(samples: Vec<(f64, [f64; 3])>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(HlfError::CameraResponse("need at least two samples".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(HlfError::CameraResponse(format!(
                    "wavelengths not strictly increasing at {} nm",
                    w[1].0
                )));
            }
        }
        for (nm, rgb) in &samples {
            if rgb.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(HlfError::CameraResponse(format!(
                    "negative or non-finite responsivity at {nm} nm"
                )));
            }
            if rgb.iter().all(|v| *v == 0.0) {
                return Err(HlfError::CameraResponse(format!(
                    "all channels zero at {nm} nm"
                )));
            }
        }
        let (first, last) = (samples[0].0, samples[samples.len() - 1].0);
        if first > 410.0 || last < 700.0 {
            return Err(HlfError::CameraResponse(format!(
                "samples cover [{first}, {last}] nm, need [410, 700]"
            )));
        }
        Ok(CameraSpectralResponse { samples })
    }

    pub fn samples(&self) -> &[(f64, [f64; 3])] {
        &self.samples
    }

    /// Responsivity at `nm`; clamped to the end samples outside the table.
    pub fn at(&self, nm: f64) -> [f64; 3] {
        let s = &self.samples;
        if nm <= s[0].0 {
            return s[0].1;
        }
        if nm >= s[s.len() - 1].0 {
            return s[s.len() - 1].1;
        }
        let hi = s.partition_point(|(l, _)| *l <= nm);
        let (l0, v0) = s[hi - 1];
        let (l1, v1) = s[hi];
        let a = (nm - l0) / (l1 - l0);
        [
            v0[0] + a * (v1[0] - v0[0]),
            v0[1] + a * (v1[1] - v0[1]),
            v0[2] + a * (v1[2] - v0[2]),
        ]
    }

    /// r = g = b = 1 everywhere.
    pub fn flat() -> Self {
        CameraSpectralResponse {
            samples: vec![(400.0, [1.0; 3]), (710.0, [1.0; 3])],
        }
    }

    /// Bundled reference profile: Gaussian-lobe RGB responsivities of a
    /// typical CMOS colour sensor, tabulated at 410..=700 nm every 10 nm.
    pub fn reference() -> Self {
        let lobe =
            |nm: f64, mu: f64, sigma: f64| (-(nm - mu).powi(2) / (2.0 * sigma * sigma)).exp();
        let samples = (0..30)
            .map(|i| {
                let nm = 410.0 + 10.0 * i as f64;
                let r = 0.95 * lobe(nm, 605.0, 40.0) + 0.01;
                let g = 1.00 * lobe(nm, 540.0, 45.0) + 0.01;
                let b = 0.90 * lobe(nm, 455.0, 30.0) + 0.01;
                (nm, [r, g, b])
            })
            .collect();
        CameraSpectralResponse { samples }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,r,g,b\n");
        for (nm, [r, g, b]) in &self.samples {
            out.push_str(&format!("{nm},{r},{g},{b}\n"));
        }
        out
    }
}

/// Reads a `lambda,r,g,b` CSV table.
pub fn load_camera_response(csv_path: impl AsRef<Path>) -> Result<CameraSpectralResponse> {
    let path = csv_path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| HlfError::CameraResponse(format!("{}: {e}", path.display())))?;
    let mut samples = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| HlfError::CameraResponse(format!("{}: {e}", path.display())))?;
        samples.push((row.lambda, [row.r, row.g, row.b]));
    }
    CameraSpectralResponse::new(samples)
}

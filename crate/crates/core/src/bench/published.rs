//! Published WRN-28-10 detection results, shipped as fixture data.
//!
//! Each row of the two source tables carries an attack success rate plus
//! F1 / FNR / ASRD for four detector variants (black-box and white-box
//! features, each scored by logistic regression and random forest). The
//! fixture exists to pin the ASRD = FNR·ASR bookkeeping against independent,
//! externally printed numbers: `asrd_identity_violations` recomputes the
//! product for every cell and reports the ones that disagree by more than
//! the 0.02 rounding slack.
//!
//! The printed source contains a handful of internally inconsistent cells
//! (see `KNOWN_DISCREPANCIES`): a corrupted ASRD pair in one low-ε row, one
//! block whose RF FNR column duplicates its LR FNR column, and two rows
//! whose ASR values were swapped. These are reproduced verbatim — the
//! fixture mirrors the print, and the pinned list keeps the check honest:
//! any transcription slip here would change the violation set and fail.

/// (dataset, attack, ε in 1/255 units, ASR, then the twelve detector columns
/// in print order: F1 LR/RF, FNR LR/RF, ASRD LR/RF for BB, then WB).
type PublishedRow = (&'static str, &'static str, Option<f64>, f64, [f64; 12]);

/// Placeholder for cells the source prints as '*': a missing measurement,
/// never a zero.
const STAR: f64 = f64::NAN;

const TABLE1_ROWS: &[PublishedRow] = &[
    ("Cif10", "fgsm", Some(8.0), 95.08, [97.34, 97.72, 2.33, 0.00, 2.22, 0.00, 99.01, 97.88, 0.00, 0.00, 0.00, 0.00]),
    ("Cif10", "bim", Some(8.0), 99.37, [92.93, 95.54, 8.00, 0.00, 7.95, 0.00, 97.65, 96.44, 3.00, 0.67, 2.98, 0.67]),
    ("Cif10", "pgd", Some(8.0), 99.27, [91.79, 95.24, 8.67, 0.00, 8.61, 0.00, 96.70, 95.85, 2.33, 0.00, 2.31, 0.00]),
    ("Cif10", "autoattack", Some(8.0), 100.00, [91.78, 96.31, 7.00, 0.00, 7.00, 0.00, 98.00, 96.76, 2.00, 0.33, 2.00, 0.33]),
    ("Cif10", "deepfool", None, 100.00, [48.31, 49.47, 54.67, 53.33, 54.67, 53.33, 54.42, 52.30, 45.67, 47.00, 45.67, 47.00]),
    ("Cif10", "cw", None, 100.00, [48.07, 53.75, 54.33, 42.67, 54.33, 42.67, 53.29, 54.52, 47.33, 40.67, 47.33, 40.67]),
    ("Cif100", "fgsm", Some(8.0), 99.95, [94.58, 97.72, 7.00, 0.00, 7.00, 0.00, 99.34, 98.85, 0.33, 0.00, 0.33, 0.00]),
    ("Cif100", "bim", Some(8.0), 99.95, [87.39, 95.39, 15.67, 0.00, 15.66, 0.00, 97.00, 98.50, 3.00, 1.33, 3.00, 1.33]),
    ("Cif100", "pgd", Some(8.0), 99.95, [86.97, 95.24, 14.33, 0.00, 14.32, 0.00, 96.83, 98.68, 3.33, 0.00, 3.33, 0.00]),
    ("Cif100", "autoattack", Some(8.0), 100.00, [92.57, 96.76, 8.67, 0.33, 8.67, 0.33, 97.35, 97.72, 2.00, 0.00, 2.00, 0.00]),
    ("Cif100", "deepfool", None, 100.00, [50.17, 51.84, 49.67, 46.00, 49.67, 46.00, 50.33, 48.00, 49.33, 54.00, 49.33, 54.00]),
    ("Cif100", "cw", None, 100.00, [50.17, 64.20, 49.67, 10.33, 49.67, 10.33, 47.92, 47.29, 54.00, 55.00, 54.00, 55.00]),
    ("ImageNet32", "fgsm", Some(8.0), 99.95, [84.53, 90.20, 15.33, 0.33, 15.32, 0.33, 100.00, 99.83, 0.00, 0.00, 0.00, 0.00]),
    ("ImageNet32", "bim", Some(8.0), 100.00, [71.33, 78.68, 30.33, 12.67, 30.33, 12.67, 100.00, 99.67, 0.00, 0.33, 0.00, 0.33]),
    ("ImageNet32", "pgd", Some(8.0), 100.00, [74.70, 78.75, 26.67, 11.67, 26.67, 11.67, 100.00, 99.67, 0.00, 0.67, 0.00, 0.67]),
    ("ImageNet32", "autoattack", Some(8.0), 100.00, [71.74, 79.82, 29.33, 11.00, 29.33, 11.00, 99.67, 99.67, 0.00, 0.33, 0.00, 0.33]),
    ("ImageNet32", "deepfool", None, 100.00, [66.59, 48.45, 0.33, 53.00, STAR, 53.00, 50.33, 48.98, 49.33, 52.00, 49.33, 52.00]),
    ("ImageNet32", "cw", None, 100.00, [66.59, 50.82, 0.33, 48.33, STAR, 48.33, 51.46, 49.41, 47.00, 51.33, 47.00, 51.33]),
    ("ImageNet64", "fgsm", Some(8.0), 100.00, [88.15, 92.59, 12.00, 0.00, 12.00, 0.00, 99.83, 99.67, 0.00, 0.00, 0.00, 0.00]),
    ("ImageNet64", "bim", Some(8.0), 100.00, [74.29, 84.30, 26.33, 3.33, 26.33, 3.33, 99.50, 99.17, 0.33, 0.00, 0.33, 0.00]),
    ("ImageNet64", "pgd", Some(8.0), 100.00, [75.63, 82.59, 25.00, 4.33, 25.00, 4.33, 99.67, 99.67, 0.33, 0.00, 0.33, 0.00]),
    ("ImageNet64", "autoattack", Some(8.0), 100.00, [78.54, 81.42, 21.33, 4.33, 21.33, 4.33, 99.83, 99.67, 0.00, 0.00, 0.00, 0.00]),
    ("ImageNet64", "deepfool", None, 100.00, [49.32, 50.82, 51.33, 48.33, 51.33, 48.33, 50.66, 48.63, 48.67, 52.67, 48.67, 52.67]),
    ("ImageNet64", "cw", None, 100.00, [60.84, 51.92, 22.33, 46.00, STAR, 46.00, 49.24, 45.29, 51.67, 58.33, 51.67, 58.33]),
    ("ImageNet128", "fgsm", Some(8.0), 100.00, [89.55, 92.88, 10.00, 0.00, 10.00, 0.00, 99.83, 99.34, 0.00, 0.00, 0.00, 0.00]),
    ("ImageNet128", "bim", Some(8.0), 100.00, [81.43, 91.36, 20.33, 1.33, 20.33, 1.33, 99.50, 98.52, 0.00, 0.33, 0.00, 0.33]),
    ("ImageNet128", "pgd", Some(8.0), 100.00, [81.82, 90.82, 19.00, 2.67, 19.00, 2.67, 99.67, 99.34, 0.00, 0.00, 0.00, 0.00]),
    ("ImageNet128", "autoattack", Some(8.0), 100.00, [77.34, 85.51, 18.67, 0.67, 18.67, 0.67, 99.34, 98.19, 0.00, 0.33, 0.00, 0.33]),
    ("ImageNet128", "deepfool", None, 100.00, [66.67, 49.15, 0.00, 51.67, STAR, 51.67, 53.85, 51.61, 41.67, 46.67, 41.67, 46.67]),
    ("ImageNet128", "cw", None, 100.00, [60.00, 53.99, 25.00, 41.33, STAR, 41.33, 54.41, 48.19, 40.33, 53.33, 40.33, 53.33]),
    ("CelebaHQ32_4", "fgsm", Some(8.0), 78.59, [75.95, 76.64, 23.67, 18.00, 18.60, 14.15, 85.95, 93.44, 13.33, 5.00, 10.48, 3.93]),
    ("CelebaHQ32_4", "bim", Some(8.0), 95.91, [73.97, 74.06, 22.33, 21.00, 21.42, 20.14, 84.48, 96.35, 12.00, 3.33, 11.51, 3.19]),
    ("CelebaHQ32_4", "pgd", Some(8.0), 90.93, [71.40, 68.99, 29.67, 30.67, 26.98, 27.89, 79.47, 91.46, 20.00, 9.00, 18.19, 8.18]),
    ("CelebaHQ32_4", "autoattack", Some(8.0), 100.00, [69.49, 74.25, 31.67, 21.67, 31.67, 21.67, 87.79, 88.71, 11.33, 9.67, 11.33, 9.67]),
    ("CelebaHQ32_4", "deepfool", None, 100.00, [59.05, 49.32, 39.67, 52.00, 39.67, 52.00, 63.59, 57.69, 35.67, 49.33, 35.67, 49.33]),
    ("CelebaHQ32_4", "cw", None, 100.00, [55.76, 48.64, 44.33, 52.33, 44.33, 52.33, 61.11, 58.46, 37.67, 40.67, 37.67, 40.67]),
    ("CelebaHQ64_4", "fgsm", Some(8.0), 100.00, [93.27, 90.97, 5.33, 4.33, 5.33, 4.33, 98.01, 99.67, 1.33, 0.33, 1.33, 0.33]),
    ("CelebaHQ64_4", "bim", Some(8.0), 100.00, [95.16, 95.30, 5.00, 2.00, 5.00, 2.00, 98.66, 99.50, 1.67, 0.67, 1.67, 0.67]),
    ("CelebaHQ64_4", "pgd", Some(8.0), 100.00, [90.85, 91.67, 9.00, 4.67, 9.00, 4.67, 97.17, 99.50, 2.67, 0.33, 2.67, 0.33]),
    ("CelebaHQ64_4", "autoattack", Some(8.0), 100.00, [84.26, 84.60, 14.33, 5.67, 14.33, 5.67, 97.17, 100.00, 2.67, 0.00, 2.67, 0.00]),
    ("CelebaHQ64_4", "deepfool", None, 100.00, [48.08, 47.04, 54.00, 55.00, 54.00, 55.00, 49.31, 49.66, 52.33, 51.33, 52.33, 51.33]),
    ("CelebaHQ64_4", "cw", None, 100.00, [50.25, 50.89, 50.00, 47.33, 50.00, 47.33, 50.25, 45.58, 50.67, 57.00, 50.67, 57.00]),
    ("CelebaHQ128_4", "fgsm", Some(8.0), 95.74, [98.82, 97.40, 2.00, 0.00, 1.91, 0.00, 99.67, 100.00, 0.67, 0.00, 0.64, 0.00]),
    ("CelebaHQ128_4", "bim", Some(8.0), 99.95, [98.16, 98.03, 2.00, 0.33, 2.00, 0.33, 99.16, 100.00, 1.33, 0.00, 1.33, 0.00]),
    ("CelebaHQ128_4", "pgd", Some(8.0), 99.76, [97.37, 98.20, 1.33, 0.00, 1.33, 0.00, 99.16, 100.00, 1.33, 0.00, 1.33, 0.00]),
    ("CelebaHQ128_4", "autoattack", Some(8.0), 100.00, [93.57, 92.88, 3.00, 0.00, 3.00, 0.00, 98.67, 100.00, 1.33, 0.00, 1.33, 0.00]),
    ("CelebaHQ128_4", "deepfool", None, 100.00, [55.21, 52.98, 44.33, 46.67, 44.33, 46.67, 55.65, 50.87, 45.00, 56.33, 45.00, 56.33]),
    ("CelebaHQ128_4", "cw", None, 100.00, [51.63, 50.50, 47.33, 49.00, 47.33, 49.00, 52.87, 50.26, 46.33, 51.00, 46.33, 51.00]),
];

const TABLE2_ROWS: &[PublishedRow] = &[
    ("Cif10", "autoattack", Some(8.0), 100.00, [91.78, 96.31, 7.00, 0.00, 7.00, 0.00, 98.00, 96.76, 2.00, 0.33, 2.00, 0.33]),
    ("Cif10", "autoattack", Some(4.0), 100.00, [83.36, 92.28, 15.67, 0.33, 15.67, 0.33, 91.00, 88.75, 7.33, 2.67, 7.33, 2.67]),
    ("Cif10", "autoattack", Some(2.0), 94.41, [69.26, 82.39, 31.67, 10.33, 29.90, 9.75, 83.63, 79.00, 14.00, 16.00, 13.22, 15.11]),
    ("Cif10", "autoattack", Some(1.0), 56.39, [57.93, 69.61, 44.00, 26.33, 24.81, 14.85, 69.32, 62.79, 30.33, 33.33, 17.10, 18.79]),
    ("Cif10", "autoattack", Some(0.5), 23.14, [52.67, 41.33, 55.52, 10.95, 47.33, 9.56, 58.55, 50.00, 40.67, 51.00, 9.41, 11.80]),
    ("Cif100", "autoattack", Some(8.0), 100.00, [92.57, 96.76, 8.67, 0.33, 8.67, 0.33, 97.35, 97.72, 2.00, 0.00, 2.00, 0.00]),
    ("Cif100", "autoattack", Some(4.0), 99.90, [83.93, 91.93, 17.33, 1.33, 17.31, 1.33, 91.61, 92.11, 9.00, 4.67, 8.99, 4.67]),
    ("Cif100", "autoattack", Some(2.0), 97.28, [72.03, 82.30, 31.33, 9.33, 30.48, 9.08, 83.22, 83.81, 15.67, 12.00, 15.24, 11.67]),
    ("Cif100", "autoattack", Some(1.0), 73.65, [62.81, 70.77, 36.67, 23.33, 27.01, 17.18, 73.89, 74.04, 25.00, 19.67, 18.41, 14.49]),
    ("Cif100", "autoattack", Some(0.5), 38.97, [51.23, 60.44, 51.33, 36.33, 20.00, 14.16, 61.59, 60.87, 39.33, 37.00, 15.33, 14.42]),
    ("ImageNet32", "autoattack", Some(8.0), 100.00, [71.74, 79.82, 29.33, 11.00, 29.33, 11.00, 99.67, 99.67, 0.00, 0.33, 0.00, 0.33]),
    ("ImageNet32", "autoattack", Some(4.0), 99.95, [62.38, 65.27, 37.00, 27.33, 36.98, 27.32, 99.00, 97.71, 0.67, 0.33, 0.67, 0.33]),
    ("ImageNet32", "autoattack", Some(2.0), 100.00, [56.58, 55.54, 42.67, 45.67, 42.67, 45.67, 96.82, 94.27, 3.67, 4.00, 3.67, 4.00]),
    ("ImageNet32", "autoattack", Some(1.0), 99.67, [51.82, 50.33, 47.67, 49.00, 47.51, 48.84, 87.67, 89.21, 12.33, 6.33, 12.29, 6.31]),
    ("ImageNet32", "autoattack", Some(0.5), 92.78, [52.55, 51.60, 45.00, 46.33, 41.75, 42.98, 79.47, 76.56, 20.00, 18.33, 18.56, 17.01]),
    ("ImageNet64", "autoattack", Some(8.0), 100.00, [78.54, 81.42, 21.33, 4.33, 21.33, 4.33, 99.83, 99.67, 0.00, 0.00, 0.00, 0.00]),
    ("ImageNet64", "autoattack", Some(4.0), 100.00, [65.37, 72.56, 33.00, 19.33, 33.00, 19.33, 99.00, 99.01, 1.33, 0.00, 1.33, 0.00]),
    ("ImageNet64", "autoattack", Some(2.0), 100.00, [58.84, 58.06, 39.00, 40.00, 39.00, 40.00, 97.03, 94.02, 2.00, 3.00, 2.00, 3.00]),
    ("ImageNet64", "autoattack", Some(1.0), 99.95, [50.53, 47.47, 52.00, 54.67, 51.97, 54.64, 88.36, 89.70, 12.67, 5.67, 12.66, 5.67]),
    ("ImageNet64", "autoattack", Some(0.5), 98.40, [48.06, 46.37, 54.67, 55.33, 53.80, 54.44, 67.38, 71.97, 37.00, 24.67, 36.41, 24.28]),
    ("ImageNet128", "autoattack", Some(8.0), 100.00, [77.34, 85.51, 18.67, 18.67, 18.67, 0.67, 99.34, 98.19, 0.00, 0.33, 0.00, 0.33]),
    ("ImageNet128", "autoattack", Some(4.0), 100.00, [59.97, 72.38, 42.33, 42.33, 42.33, 17.00, 97.52, 96.61, 1.67, 0.33, 1.67, 0.33]),
    ("ImageNet128", "autoattack", Some(2.0), 98.47, [54.93, 57.28, 44.33, 44.33, 44.33, 41.00, 92.28, 90.00, 6.33, 1.00, 6.33, 1.00]),
    ("ImageNet128", "autoattack", Some(1.0), 100.00, [48.17, 51.97, 54.00, 54.00, 54.00, 47.33, 82.66, 80.58, 15.00, 6.67, 15.00, 6.67]),
    ("ImageNet128", "autoattack", Some(0.5), 100.00, [48.54, 52.46, 53.00, 53.00, 52.19, 44.31, 70.53, 71.17, 25.00, 14.00, 24.62, 13.79]),
    ("CelebaHQ32_4", "autoattack", Some(8.0), 100.00, [69.49, 74.25, 31.67, 21.67, 31.67, 21.67, 87.79, 88.71, 11.33, 9.67, 11.33, 9.67]),
    ("CelebaHQ32_4", "autoattack", Some(4.0), 99.43, [56.20, 58.90, 43.33, 37.67, 43.08, 37.46, 72.07, 71.14, 27.33, 29.33, 27.17, 29.16]),
    ("CelebaHQ32_4", "autoattack", Some(2.0), 68.26, [51.86, 50.43, 49.00, 50.67, 33.45, 34.59, 59.31, 56.24, 40.00, 46.67, 27.30, 31.86]),
    ("CelebaHQ32_4", "autoattack", Some(1.0), 27.70, [45.34, 46.29, 57.82, 55.44, 16.02, 15.36, 49.82, 51.26, 52.38, 47.96, 14.51, 13.28]),
    ("CelebaHQ32_4", "autoattack", Some(0.5), 10.91, [54.69, 45.45, 40.17, 57.26, 4.38, 6.25, 53.44, 44.75, 43.59, 58.12, 4.76, 6.34]),
    ("CelebaHQ64_4", "autoattack", Some(8.0), 100.00, [84.26, 86.90, 14.33, 2.67, 14.33, 2.67, 97.17, 100.00, 2.67, 0.00, 2.67, 0.00]),
    ("CelebaHQ64_4", "autoattack", Some(4.0), 100.00, [64.23, 58.35, 35.67, 40.00, 35.67, 40.00, 90.88, 94.86, 10.33, 4.67, 10.33, 4.67]),
    ("CelebaHQ64_4", "autoattack", Some(2.0), 99.31, [55.19, 52.60, 43.33, 46.00, 43.03, 45.68, 72.51, 73.61, 28.33, 31.67, 28.13, 31.45]),
    ("CelebaHQ64_4", "autoattack", Some(1.0), 69.94, [48.59, 51.09, 54.00, 49.00, 37.77, 34.27, 55.30, 57.63, 47.00, 43.33, 32.87, 30.31]),
    ("CelebaHQ64_4", "autoattack", Some(0.5), 28.14, [48.36, 48.45, 53.33, 53.00, 15.01, 14.91, 52.68, 48.04, 46.00, 55.00, 12.94, 15.48]),
    ("CelebaHQ128_4", "autoattack", Some(8.0), 100.00, [71.52, 72.76, 24.67, 23.00, 24.67, 23.00, 94.21, 99.17, 5.00, 0.00, 5.00, 0.00]),
    ("CelebaHQ128_4", "autoattack", Some(4.0), 100.00, [93.57, 92.88, 3.00, 0.00, 3.00, 0.00, 98.67, 100.00, 1.33, 0.00, 1.33, 0.00]),
    ("CelebaHQ128_4", "autoattack", Some(2.0), 100.00, [54.94, 48.26, 45.33, 53.67, 45.33, 53.67, 82.99, 89.07, 18.67, 7.67, 18.67, 7.67]),
    ("CelebaHQ128_4", "autoattack", Some(1.0), 98.02, [51.51, 47.08, 48.67, 54.33, 47.71, 53.25, 63.18, 60.17, 37.67, 41.33, 36.92, 40.51]),
    ("CelebaHQ128_4", "autoattack", Some(0.5), 61.98, [50.74, 48.52, 48.67, 53.67, 30.17, 33.26, 53.22, 53.36, 47.67, 47.00, 29.55, 29.13]),
];

/// One (dataset, attack, ε, source, detector) cell of the published tables.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedCell {
    pub dataset: &'static str,
    pub attack: &'static str,
    /// l∞ budget in 1/255 units; None for the unbudgeted l2 methods.
    pub epsilon_255: Option<f64>,
    /// "bb" or "wb".
    pub source: &'static str,
    /// "lr" or "rf".
    pub detector: &'static str,
    /// Percentages as printed.
    pub asr: f64,
    pub f1: f64,
    pub fnr: f64,
    /// None mirrors the '*' cells.
    pub asrd: Option<f64>,
}

impl PublishedCell {
    /// Stable identity string: `dataset|attack|ε|source|detector`.
    pub fn key(&self) -> String {
        let eps = match self.epsilon_255 {
            Some(e) => format!("{e}"),
            None => "-".to_string(),
        };
        format!("{}|{}|{}|{}|{}", self.dataset, self.attack, eps, self.source, self.detector)
    }
}

fn expand(rows: &[PublishedRow]) -> Vec<PublishedCell> {
    let mut out = Vec::with_capacity(rows.len() * 4);
    for &(dataset, attack, epsilon_255, asr, cols) in rows {
        for (base, source) in [(0usize, "bb"), (6usize, "wb")] {
            for (off, detector) in [(0usize, "lr"), (1usize, "rf")] {
                let asrd = cols[base + 4 + off];
                out.push(PublishedCell {
                    dataset,
                    attack,
                    epsilon_255,
                    source,
                    detector,
                    asr,
                    f1: cols[base + off],
                    fnr: cols[base + 2 + off],
                    asrd: if asrd.is_nan() { None } else { Some(asrd) },
                });
            }
        }
    }
    out
}

/// The per-attack table: six methods on eight datasets at ε = 8/255.
pub fn table_attacks() -> Vec<PublishedCell> {
    expand(TABLE1_ROWS)
}

/// The ε-sweep table: the attack ensemble at five budgets on eight datasets.
pub fn table_epsilons() -> Vec<PublishedCell> {
    expand(TABLE2_ROWS)
}

/// Cells whose printed ASRD disagrees with FNR·ASR by more than the rounding
/// slack. All sit in the ε-sweep table and trace back to three identifiable
/// printing faults:
/// - the Cif10 ε=0.5 BB ASRD pair is corrupt (its LR value even exceeds the
///   row's ASR, which the identity can never produce);
/// - the ImageNet128 block's BB FNR-RF column duplicates the FNR-LR column,
///   while its ASRD-RF column was computed from the true FNR-RF values;
/// - the ImageNet128 ASR entries for ε=2 and ε=0.5 are swapped (each row's
///   WB ASRD matches the other row's ASR exactly).
pub const KNOWN_DISCREPANCIES: &[&str] = &[
    "Cif10|autoattack|0.5|bb|lr",
    "Cif10|autoattack|0.5|bb|rf",
    "ImageNet128|autoattack|8|bb|rf",
    "ImageNet128|autoattack|4|bb|rf",
    "ImageNet128|autoattack|2|bb|lr",
    "ImageNet128|autoattack|2|bb|rf",
    "ImageNet128|autoattack|2|wb|lr",
    "ImageNet128|autoattack|1|bb|rf",
    "ImageNet128|autoattack|0.5|bb|lr",
    "ImageNet128|autoattack|0.5|bb|rf",
    "ImageNet128|autoattack|0.5|wb|lr",
    "ImageNet128|autoattack|0.5|wb|rf",
];

/// Sorted keys of all non-'*' cells where |printed ASRD − FNR·ASR/100| > 0.02.
pub fn asrd_identity_violations(cells: &[PublishedCell]) -> Vec<String> {
    let mut out: Vec<String> = cells
        .iter()
        .filter_map(|c| {
            let asrd = c.asrd?;
            let err = (asrd - c.fnr * c.asr / 100.0).abs();
            (err > 0.02).then(|| c.key())
        })
        .collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_have_the_printed_shape() {
        let t1 = table_attacks();
        let t2 = table_epsilons();
        assert_eq!(t1.len(), 48 * 4);
        assert_eq!(t2.len(), 40 * 4);
        let stars: Vec<String> =
            t1.iter().filter(|c| c.asrd.is_none()).map(|c| c.key()).collect();
        assert_eq!(
            stars,
            [
                "ImageNet32|deepfool|-|bb|lr",
                "ImageNet32|cw|-|bb|lr",
                "ImageNet64|cw|-|bb|lr",
                "ImageNet128|deepfool|-|bb|lr",
                "ImageNet128|cw|-|bb|lr",
            ],
            "the '*' cells all sit in the black-box LR ASRD column"
        );
        assert!(t2.iter().all(|c| c.asrd.is_some()));
    }

    #[test]
    fn spot_checks_match_the_print() {
        let t1 = table_attacks();
        let cell = |key: &str| t1.iter().find(|c| c.key() == key).unwrap().clone();
        let c = cell("Cif10|fgsm|8|bb|lr");
        assert_eq!((c.asr, c.fnr, c.asrd), (95.08, 2.33, Some(2.22)));
        let c = cell("CelebaHQ32_4|fgsm|8|bb|lr");
        assert_eq!((c.asr, c.fnr, c.asrd), (78.59, 23.67, Some(18.60)));
        // and the identity reproduces both printed products
        assert!((95.08_f64 * 0.0233 - 2.22).abs() <= 0.02);
        assert!((78.59_f64 * 0.2367 - 18.60).abs() <= 0.02);
    }

    #[test]
    fn asrd_identity_holds_everywhere_except_the_pinned_cells() {
        assert!(
            asrd_identity_violations(&table_attacks()).is_empty(),
            "per-attack table must be internally consistent"
        );
        let mut expected: Vec<String> =
            KNOWN_DISCREPANCIES.iter().map(|s| s.to_string()).collect();
        expected.sort();
        assert_eq!(
            asrd_identity_violations(&table_epsilons()),
            expected,
            "ε-sweep violations must be exactly the pinned print faults"
        );
    }

    #[test]
    fn asrd_never_exceeds_asr_on_consistent_cells() {
        for c in table_attacks().iter().chain(table_epsilons().iter()) {
            if KNOWN_DISCREPANCIES.contains(&c.key().as_str()) {
                continue;
            }
            if let Some(asrd) = c.asrd {
                assert!(
                    asrd <= c.asr + 0.02,
                    "{}: asrd {} > asr {}",
                    c.key(),
                    asrd,
                    c.asr
                );
            }
        }
    }
}

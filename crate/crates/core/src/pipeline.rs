//! Real-data workflow: load a CSV, impose covariate-driven labeling, fit a
//! linear outcome model on the labeled rows, predict every row, and compare
//! the estimators against the full-data mean.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::output::{fmt_sig, render_table};
use crate::propensity::sigmoid;
use crate::regression::{linear_predictor, ols_with_intercept, select_rows};
use crate::simulate::{compute_estimate, estimate_xi_on, XiModel};
use crate::types::{EstimateWithCI, EstimatorOptions, EstimatorTag, FinitePopulation, LabelingDesign};

/// Column roles in the input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSchema {
    pub outcome: String,
    pub covariates: Vec<String>,
    pub labeling_covariate: String,
    /// Covariates to one-hot encode (first level dropped).
    pub categorical: Vec<String>,
}

impl DatasetSchema {
    /// The NHANES layout: BMI on age, gender, waist, arm, leg and race.
    pub fn nhanes() -> Self {
        DatasetSchema {
            outcome: "BMI".into(),
            covariates: ["Age", "Gender", "Waist", "Arm", "Leg", "Race"]
                .map(String::from)
                .to_vec(),
            labeling_covariate: "Age".into(),
            categorical: vec!["Gender".into(), "Race".into()],
        }
    }

    fn validate(&self) -> Result<()> {
        for c in &self.categorical {
            if !self.covariates.contains(c) {
                return Err(Error::Schema(format!("categorical column '{c}' is not a covariate")));
            }
        }
        for name in [&self.outcome, &self.labeling_covariate] {
            if self.categorical.contains(name) {
                return Err(Error::Schema(format!("column '{name}' must be numeric")));
            }
        }
        if self.covariates.contains(&self.outcome) {
            return Err(Error::Schema(format!("outcome '{}' listed as a covariate", self.outcome)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Drop any row with a blank cell in a schema column.
    #[default]
    DropRows,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    /// Expanded covariates and outcome, no predictions.
    pub population: FinitePopulation,
    /// Names of the expanded covariate columns (`Race=2`, ...).
    pub column_names: Vec<String>,
    /// Labeling covariate per kept row.
    pub labeling_values: Vec<f64>,
    pub rows_read: usize,
    pub rows_dropped: usize,
}

enum ColumnKind {
    Numeric,
    Categorical(Vec<String>),
}

fn parse_numeric(value: &str, column: &str, row: usize) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Schema(format!("row {row}: column '{column}' value '{value}' is not numeric")))
}

/// Sorted levels; numeric order when every level parses as a number.
fn sorted_levels(levels: BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = levels.into_iter().collect();
    let numeric: Option<Vec<f64>> = v.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(keys) = numeric {
        let mut pairs: Vec<(f64, String)> = keys.into_iter().zip(v).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        v = pairs.into_iter().map(|(_, s)| s).collect();
    }
    v
}

/// Reads a headered CSV, drops rows with blank schema cells and one-hot
/// encodes the categorical covariates.
pub fn load_csv(path: &Path, schema: &DatasetSchema, policy: MissingPolicy) -> Result<LoadedDataset> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
    parse_csv(text.as_bytes(), schema, policy)
}

/// As [`load_csv`] on any reader.
pub fn parse_csv<R: Read>(input: R, schema: &DatasetSchema, policy: MissingPolicy) -> Result<LoadedDataset> {
    let MissingPolicy::DropRows = policy;
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let index_of = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let outcome_idx = index_of(&schema.outcome)?;
    let label_idx = index_of(&schema.labeling_covariate)?;
    let cov_idx = schema
        .covariates
        .iter()
        .map(|c| index_of(c))
        .collect::<Result<Vec<_>>>()?;

    let mut kept: Vec<csv::StringRecord> = Vec::new();
    let mut rows_read = 0;
    for record in reader.records() {
        let record = record?;
        rows_read += 1;
        let blank = std::iter::once(outcome_idx)
            .chain(std::iter::once(label_idx))
            .chain(cov_idx.iter().copied())
            .any(|j| record.get(j).is_none_or(str::is_empty));
        if !blank {
            kept.push(record);
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyAfterFiltering);
    }

    let kinds: Vec<ColumnKind> = schema
        .covariates
        .iter()
        .zip(&cov_idx)
        .map(|(name, &j)| {
            if schema.categorical.contains(name) {
                let levels: BTreeSet<String> = kept.iter().map(|r| r[j].to_string()).collect();
                ColumnKind::Categorical(sorted_levels(levels))
            } else {
                ColumnKind::Numeric
            }
        })
        .collect();
    let mut column_names = Vec::new();
    for (name, kind) in schema.covariates.iter().zip(&kinds) {
        match kind {
            ColumnKind::Numeric => column_names.push(name.clone()),
            ColumnKind::Categorical(levels) => {
                column_names.extend(levels.iter().skip(1).map(|l| format!("{name}={l}")));
            }
        }
    }

    let n = kept.len();
    let p = column_names.len();
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    let mut labeling_values = Vec::with_capacity(n);
    for (i, record) in kept.iter().enumerate() {
        let row = i + 1;
        y.push(parse_numeric(&record[outcome_idx], &schema.outcome, row)?);
        labeling_values.push(parse_numeric(&record[label_idx], &schema.labeling_covariate, row)?);
        let mut col = 0;
        for ((name, &j), kind) in schema.covariates.iter().zip(&cov_idx).zip(&kinds) {
            match kind {
                ColumnKind::Numeric => {
                    x[(i, col)] = parse_numeric(&record[j], name, row)?;
                    col += 1;
                }
                ColumnKind::Categorical(levels) => {
                    let level = levels.iter().position(|l| l == &record[j]).expect("level seen");
                    if level > 0 {
                        x[(i, col + level - 1)] = 1.0;
                    }
                    col += levels.len() - 1;
                }
            }
        }
    }
    Ok(LoadedDataset {
        population: FinitePopulation::new(x, y, None)?,
        column_names,
        labeling_values,
        rows_read,
        rows_dropped: rows_read - n,
    })
}

/// `ξᵢ = σ(a + b·vᵢ)`, `Rᵢ ~ Bernoulli(ξᵢ)`.
pub fn impose_labeling_on(values: &[f64], intercept: f64, slope: f64, seed: u64) -> Result<LabelingDesign> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi: Vec<f64> = values
        .iter()
        .map(|&v| sigmoid(intercept + slope * v).max(f64::MIN_POSITIVE))
        .collect();
    let labeled = xi.iter().map(|&p| rng.random::<f64>() < p).collect();
    LabelingDesign::from_labels(xi, labeled)
}

/// Labeling driven by covariate column `index` of `pop`.
pub fn impose_labeling(
    pop: &FinitePopulation,
    intercept: f64,
    slope: f64,
    index: usize,
    seed: u64,
) -> Result<LabelingDesign> {
    if index >= pop.n_covariates() {
        return Err(Error::InvalidArgument(format!(
            "covariate index {index} out of range for {} columns",
            pop.n_covariates()
        )));
    }
    let values: Vec<f64> = pop.covariates().column(index).iter().copied().collect();
    impose_labeling_on(&values, intercept, slope, seed)
}

/// OLS of `Y` on `(1, X)` over the labeled rows; predictions for all rows.
pub fn fit_outcome_model(pop: &FinitePopulation, design: &LabelingDesign) -> Result<Vec<f64>> {
    let needed = pop.n_covariates() + 2;
    if design.n_lab() < needed {
        return Err(Error::InsufficientLabels {
            needed,
            found: design.n_lab(),
        });
    }
    let lab = design.labeled_indices();
    let y: Vec<f64> = lab.iter().map(|&i| pop.outcomes()[i]).collect();
    let beta = ols_with_intercept(&select_rows(pop.covariates(), &lab), &y)?;
    Ok(linear_predictor(pop.covariates(), beta.as_slice()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub intercept: f64,
    pub slope: f64,
    pub xi_model: XiModel,
    pub seed: u64,
    pub options: EstimatorOptions,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            intercept: 3.0,
            slope: -0.05,
            xi_model: XiModel::TrueXi,
            seed: 1,
            options: EstimatorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub estimates: Vec<EstimateWithCI>,
    /// Full-data outcome mean.
    pub truth: f64,
    pub n_units: usize,
    pub n_lab: usize,
    pub rows_dropped: usize,
}

pub const PIPELINE_HEADER: [&str; 5] = ["estimator", "estimate", "se", "lower", "upper"];

impl PipelineReport {
    pub fn estimate(&self, tag: EstimatorTag) -> Option<&EstimateWithCI> {
        self.estimates.iter().find(|e| e.estimator_tag == tag)
    }

    fn cells(&self) -> Vec<Vec<String>> {
        let mut rows: Vec<Vec<String>> = self
            .estimates
            .iter()
            .map(|e| {
                vec![
                    e.estimator_tag.to_string(),
                    fmt_sig(e.estimate, 6),
                    fmt_sig(e.std_error, 6),
                    fmt_sig(e.ci_lower, 6),
                    fmt_sig(e.ci_upper, 6),
                ]
            })
            .collect();
        rows.push(vec!["truth".into(), fmt_sig(self.truth, 6), String::new(), String::new(), String::new()]);
        rows
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(PIPELINE_HEADER)?;
        for row in self.cells() {
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_table(&self) -> String {
        format!(
            "N {}  labeled {}  dropped rows {}\n{}",
            self.n_units,
            self.n_lab,
            self.rows_dropped,
            render_table(&PIPELINE_HEADER, &self.cells())
        )
    }
}

/// Labels, fits, predicts and estimates on an already loaded dataset.
pub fn run_pipeline_on(data: &LoadedDataset, params: &PipelineParams) -> Result<PipelineReport> {
    let design = impose_labeling_on(&data.labeling_values, params.intercept, params.slope, params.seed)?;
    let predictions = fit_outcome_model(&data.population, &design)?;
    let pop = data.population.with_predictions(predictions)?;
    let design = match params.xi_model {
        XiModel::TrueXi => design,
        XiModel::EstimatedXi => {
            let v = &data.labeling_values;
            estimate_xi_on(&DMatrix::from_column_slice(v.len(), 1, v), &design)?
        }
    };
    let estimates = EstimatorTag::COMPARISON
        .iter()
        .map(|&tag| compute_estimate(tag, &pop, &design, &params.options, 5, params.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(PipelineReport {
        estimates,
        truth: pop.outcome_mean(),
        n_units: pop.n_units(),
        n_lab: design.n_lab(),
        rows_dropped: data.rows_dropped,
    })
}

pub fn run_pipeline(path: &Path, schema: &DatasetSchema, params: &PipelineParams) -> Result<PipelineReport> {
    let data = load_csv(path, schema, MissingPolicy::DropRows)?;
    run_pipeline_on(&data, params)
}

/// Synthetic stand-in for an NHANES body-measures extract.
///
/// Per row: `Age ~ U{20..80}`, `Gender ∈ {1, 2}`, `Race ∈ {1..5}`,
/// `Waist = 80 + 0.3(Age − 50) + 5·male + N(0, 9²)`,
/// `Arm = 33 + 0.02(Age − 50) + 1.5·male + N(0, 2.5²)`,
/// `Leg = 38 − 0.06(Age − 50) + 2·male + N(0, 2.5²)`,
/// `BMI = 1 + 0.3 Waist + 0.1 Arm − 0.1 Leg + 0.05(Age − 50) − 2·male + race shift + N(0, 1.5²)`
/// with race shifts `(0, 0.8, −0.5, 1.2, −1.0)`. Measurements are rounded to
/// one decimal, and about 2% of cells in Waist, Arm and Leg are left blank.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub csv: String,
    /// BMI mean over the complete rows, as parsed back from the CSV.
    pub truth: f64,
    pub complete_rows: usize,
}

pub const FIXTURE_COLUMNS: [&str; 8] = ["SEQN", "Age", "Gender", "Waist", "Arm", "Leg", "Race", "BMI"];

pub fn nhanes_like_fixture(n: usize, seed: u64) -> Fixture {
    const RACE_SHIFT: [f64; 5] = [0.0, 0.8, -0.5, 1.2, -1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |sd: f64| Normal::new(0.0, sd).expect("valid sd");
    let (waist_e, limb_e, bmi_e) = (normal(9.0), normal(2.5), normal(1.5));
    let round1 = |v: f64| format!("{v:.1}");
    let mut csv = FIXTURE_COLUMNS.join(",");
    csv.push('\n');
    let (mut sum, mut complete) = (0.0, 0usize);
    for id in 0..n {
        let age = rng.random_range(20..=80) as f64;
        let gender = rng.random_range(1..=2);
        let race = rng.random_range(1..=5usize);
        let male = f64::from(u8::from(gender == 1));
        let a = age - 50.0;
        let waist = 80.0 + 0.3 * a + 5.0 * male + waist_e.sample(&mut rng);
        let arm = 33.0 + 0.02 * a + 1.5 * male + limb_e.sample(&mut rng);
        let leg = 38.0 - 0.06 * a + 2.0 * male + limb_e.sample(&mut rng);
        let bmi = 1.0 + 0.3 * waist + 0.1 * arm - 0.1 * leg + 0.05 * a - 2.0 * male
            + RACE_SHIFT[race - 1]
            + bmi_e.sample(&mut rng);
        let mut cells = [round1(waist), round1(arm), round1(leg)];
        let mut missing = false;
        for c in &mut cells {
            if rng.random::<f64>() < 0.0067 {
                c.clear();
                missing = true;
            }
        }
        let bmi_s = round1(bmi);
        if !missing {
            sum += bmi_s.parse::<f64>().expect("formatted number");
            complete += 1;
        }
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            id + 1,
            age,
            gender,
            cells[0],
            cells[1],
            cells[2],
            race,
            bmi_s
        ));
    }
    Fixture {
        csv,
        truth: sum / complete as f64,
        complete_rows: complete,
    }
}

/// Writes [`nhanes_like_fixture`] to `path`.
pub fn write_fixture(path: &Path, n: usize, seed: u64) -> Result<Fixture> {
    let fixture = nhanes_like_fixture(n, seed);
    std::fs::write(path, &fixture.csv).map_err(|source| Error::File {
        path: PathBuf::from(path),
        source,
    })?;
    Ok(fixture)
}

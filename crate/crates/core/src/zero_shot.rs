//! Text prompts, image–text similarity and softmax classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marker::MarkerKind;

pub const DEFAULT_TEMPLATE: &str = "A chest x-ray with a {class} lung nodule";
pub const DEFAULT_MENTION: &str = " indicated by a red {annotation}";
pub const DEFAULT_CLASSES: [&str; 2] = ["benign", "malignant"];

/// Unit-normalized embedding from either encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Normalizes `raw` to unit Euclidean length.
    pub fn normalized(raw: Vec<f32>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::validation("empty embedding"));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Computation("embedding holds non-finite values".into()));
        }
        let norm = raw.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Computation("cannot normalize a zero embedding".into()));
        }
        Ok(Self {
            values: raw.into_iter().map(|v| (v as f64 / norm) as f32).collect(),
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZeroShotConfig {
    /// When unset, the scale reported by the backend is used.
    pub logit_scale: Option<f64>,
    pub positive_class_index: usize,
    pub classes: Vec<String>,
    pub template: String,
    pub mention_template: String,
}

impl Default for ZeroShotConfig {
    fn default() -> Self {
        Self {
            logit_scale: None,
            positive_class_index: 1,
            classes: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
            template: DEFAULT_TEMPLATE.into(),
            mention_template: DEFAULT_MENTION.into(),
        }
    }
}

impl ZeroShotConfig {
    pub const FALLBACK_LOGIT_SCALE: f64 = 100.0;

    pub fn effective_scale(&self) -> f64 {
        self.logit_scale.unwrap_or(Self::FALLBACK_LOGIT_SCALE)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.effective_scale();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::config(format!("logit_scale must be positive, got {s}")));
        }
        if self.positive_class_index >= self.classes.len() {
            return Err(Error::config(format!(
                "positive_class_index {} out of range for {} classes",
                self.positive_class_index,
                self.classes.len()
            )));
        }
        Ok(())
    }
}

/// Rendered class descriptions; index `i` describes class `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptSet {
    pub class_names: Vec<String>,
    pub template: String,
    pub marker_mention: Option<String>,
    pub rendered: Vec<String>,
}

impl PromptSet {
    pub fn len(&self) -> usize {
        self.rendered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rendered.is_empty()
    }
}

/// Renders one prompt per class, optionally naming the drawn marker.
pub fn build_prompts(
    classes: &[String],
    template: &str,
    mention: Option<(&str, MarkerKind)>,
) -> Result<PromptSet> {
    if classes.len() < 2 {
        return Err(Error::validation(format!(
            "zero-shot classification needs at least two classes, got {}",
            classes.len()
        )));
    }
    if !template.contains("{class}") {
        return Err(Error::config("prompt template lacks a {class} slot"));
    }
    let marker_mention = match mention {
        None => None,
        Some((mention_template, kind)) => {
            let word = kind.annotation_word().ok_or_else(|| {
                Error::config(format!("no annotation word for visual prompt '{kind}'"))
            })?;
            Some(mention_template.replace("{annotation}", word))
        }
    };
    let rendered = classes
        .iter()
        .map(|c| {
            let mut p = template.replace("{class}", c);
            if let Some(m) = &marker_mention {
                p.push_str(m);
            }
            p
        })
        .collect::<Vec<_>>();
    if rendered.iter().any(|p| p.is_empty()) {
        return Err(Error::validation("rendered prompt is empty"));
    }
    Ok(PromptSet {
        class_names: classes.to_vec(),
        template: template.to_string(),
        marker_mention,
        rendered,
    })
}

/// Convenience wrapper over [`build_prompts`] with the default wording.
pub fn default_prompts(marker: Option<MarkerKind>) -> Result<PromptSet> {
    let classes: Vec<String> = DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect();
    build_prompts(&classes, DEFAULT_TEMPLATE, marker.map(|k| (DEFAULT_MENTION, k)))
}

pub fn similarity(img: &EmbeddingVector, txt: &EmbeddingVector, logit_scale: f64) -> Result<f64> {
    if img.dim() != txt.dim() {
        return Err(Error::validation(format!(
            "embedding dims differ: {} vs {}",
            img.dim(),
            txt.dim()
        )));
    }
    let dot: f64 = img
        .values
        .iter()
        .zip(&txt.values)
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum();
    Ok(logit_scale * dot)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
    pub decision: usize,
}

/// Max-subtracted softmax over raw scores.
pub fn softmax(scores: &[f64]) -> Result<ProbabilityVector> {
    if scores.len() < 2 {
        return Err(Error::validation("softmax needs at least two scores"));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Computation(format!("non-finite similarity score {s}")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
    // first index wins ties
    let decision = probs
        .iter()
        .enumerate()
        .fold(0, |best, (i, &p)| if p > probs[best] { i } else { best });
    Ok(ProbabilityVector {
        scores: scores.to_vec(),
        probs,
        decision,
    })
}

pub fn classify(
    img: &EmbeddingVector,
    prompts: &[EmbeddingVector],
    cfg: &ZeroShotConfig,
) -> Result<ProbabilityVector> {
    if prompts.len() < 2 {
        return Err(Error::validation("classification needs at least two prompts"));
    }
    let scale = cfg.effective_scale();
    let scores = prompts
        .iter()
        .map(|t| similarity(img, t, scale))
        .collect::<Result<Vec<_>>>()?;
    softmax(&scores)
}

pub fn malignancy_score(probs: &ProbabilityVector, cfg: &ZeroShotConfig) -> Result<f64> {
    probs
        .probs
        .get(cfg.positive_class_index)
        .copied()
        .ok_or_else(|| {
            Error::config(format!(
                "positive_class_index {} out of range for {} classes",
                cfg.positive_class_index,
                probs.probs.len()
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f32]) -> EmbeddingVector {
        EmbeddingVector::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn prompt_wording() {
        let plain = default_prompts(None).unwrap();
        assert_eq!(plain.rendered[0], "A chest x-ray with a benign lung nodule");
        let circ = default_prompts(Some(MarkerKind::Circle)).unwrap();
        assert_eq!(
            circ.rendered[1],
            "A chest x-ray with a malignant lung nodule indicated by a red circle"
        );
        let contour = default_prompts(Some(MarkerKind::Contour)).unwrap();
        assert!(contour.rendered[0].ends_with("indicated by a red contour"));
    }

    #[test]
    fn prompt_errors() {
        assert!(build_prompts(&[], DEFAULT_TEMPLATE, None).is_err());
        assert!(matches!(default_prompts(Some(MarkerKind::Crop)), Err(Error::Config(_))));
        assert!(matches!(default_prompts(Some(MarkerKind::None)), Err(Error::Config(_))));
    }

    #[test]
    fn similarity_cases() {
        let a = emb(&[3.0, 4.0]);
        assert!((similarity(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(similarity(&emb(&[1.0, 0.0]), &emb(&[0.0, 2.0]), 1.0).unwrap(), 0.0);
        assert!(similarity(&a, &emb(&[1.0, 0.0, 0.0]), 1.0).is_err());
    }

    #[test]
    fn softmax_cases() {
        let p = softmax(&[0.3, 0.3]).unwrap();
        assert_eq!(p.probs, vec![0.5, 0.5]);
        let p = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert!((p.probs[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.probs[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(p.decision, 0);
        let big = softmax(&[1000.0, 999.0]).unwrap();
        assert!((big.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(softmax(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn positive_score() {
        let cfg = ZeroShotConfig::default();
        let p = ProbabilityVector {
            scores: vec![0.0, 0.0],
            probs: vec![0.3, 0.7],
            decision: 1,
        };
        assert_eq!(malignancy_score(&p, &cfg).unwrap(), 0.7);
        let bad = ZeroShotConfig {
            positive_class_index: 2,
            ..ZeroShotConfig::default()
        };
        assert!(matches!(malignancy_score(&p, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn zero_embedding_rejected() {
        assert!(EmbeddingVector::normalized(vec![0.0, 0.0]).is_err());
        assert!(EmbeddingVector::normalized(vec![f32::NAN]).is_err());
    }
}

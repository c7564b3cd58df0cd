use serde::{Deserialize, Serialize};

use super::{Classifier, ProbVector};
use crate::baselines::{LogRegModel, SvmModel};
use crate::error::Result;
use crate::features::TfidfModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Logreg(LogRegModel),
    Svm(SvmModel),
}

/// TF-IDF featurizer plus a trained linear or kernel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineClassifier {
    pub id: String,
    pub tfidf: TfidfModel,
    pub model: BaselineKind,
}

impl Classifier for BaselineClassifier {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn predict(&self, sentence: &str) -> Result<ProbVector> {
        let x = self.tfidf.transform(sentence);
        let p = match &self.model {
            BaselineKind::Logreg(m) => m.predict_proba(&x)?,
            BaselineKind::Svm(m) => m.predict_proba(&x)?,
        };
        ProbVector::new(p)
    }
}

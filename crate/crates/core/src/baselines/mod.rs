//! Classical baselines over TF-IDF vectors: a seeded random labeler,
//! multinomial logistic regression and a one-vs-rest sigmoid-kernel SVM.

mod logreg;
mod pipeline;
mod random;
mod svm;

pub use logreg::{train_logreg, LogRegHyper, LogRegModel};
pub use pipeline::{stratified_subsample, train_baseline, training_records, Algo, TrainConfig, TrainReport};
pub use random::{predict_random, RandomModel};
pub use svm::{train_svm_ovr, BinarySvm, SigmoidKernel, SvmHyper, SvmModel};

//! Per-view logistic regression and the naive Bayes document classifier.

mod logreg;
mod nb;

pub use logreg::{
    loss_gradient, predict_proba, sigmoid, stability_bound, train_logreg,
    train_logreg_allow_single_class, train_logreg_traced, Gradient, LogRegModel, TrainConfig,
    PROB_FLOOR,
};
pub use nb::{ngram_features, nb_predict_proba, train_nb, NbModel};

//! Key-event regression models and the cycle-time models.

pub mod bank;
pub mod cycle_time;
pub mod ols;
pub mod robust;

pub use bank::{
    extract_dataset_events, predict_events, train_bank, train_bank_from_events, BankEntry, CycleEvents,
    ModelBank, ModelEntry, Predictor, PredictorVector, RegressionModel, BANK_FORMAT_VERSION, DEFAULT_ALPHA,
};
pub use cycle_time::{predict_cycle_time_personalized, predict_cycle_time_standard, CycleTimeModel};
pub use ols::{fit_ols, stepwise_select, OlsFit};
pub use robust::{fit_robust_bisquare, RobustFit};

//! Shapley values and interactions of perturbation units, plus the
//! second-order analysis of momentum with a scaled step on quadratic games.

mod coefficients;
mod game;
mod shapley;

pub use coefficients::{coefficients, coefficients_f64, exact_mu, CoefficientSchedule, ExactCoefficients};
pub use game::{predicted_delta, predicted_interaction, simulate_raw, AnalyticGame, PredictedInteraction};
pub use shapley::{
    expected_interaction_sampled, interaction_second_difference, mean_interaction_exact, reward,
    shapley_interaction_exact, shapley_value_exact, CoalitionGame, InteractionEstimate, PerturbationGame,
    QuadraticCoalition, MAX_EXACT_PLAYERS,
};

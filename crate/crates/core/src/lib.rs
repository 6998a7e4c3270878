//! Semantic smoothing for bigram language models.
//!
//! Count-based conditional estimates are interpolated with the estimates of
//! nearby contexts, where "nearby" is measured in an embedding space and the
//! interpolation weights come from risk-bound proxies. The crate also ships a
//! synthetic Markov testbed whose logits are exactly low rank, and a Monte
//! Carlo lab that checks the KL-risk bounds the weights are derived from.
//!
//! ```
//! use semsmooth::estimators::add_beta;
//! use semsmooth::prob::{kl_divergence, ProbDist};
//!
//! let estimate = add_beta(&[2, 0, 1], 0.5).unwrap();
//! let truth = ProbDist::new(vec![0.5, 0.2, 0.3]).unwrap();
//! assert!(kl_divergence(&truth, &estimate) < 0.1);
//! ```

mod accum;

pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod estimators;
pub mod prob;
pub mod risk;
pub mod semantic;
pub mod synthetic;

pub use error::{Error, Result};
pub use prob::{ConditionalModel, ProbDist};

/// The guide's snippets, compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/perplexity.md")]
    pub struct Perplexity;
    #[doc = include_str!("../../../book/src/corpus.md")]
    pub struct Corpus;
    #[doc = include_str!("../../../book/src/estimators.md")]
    pub struct Estimators;
    #[doc = include_str!("../../../book/src/synonyms.md")]
    pub struct Synonyms;
    #[doc = include_str!("../../../book/src/semantic.md")]
    pub struct Semantic;
    #[doc = include_str!("../../../book/src/synthetic.md")]
    pub struct Synthetic;
    #[doc = include_str!("../../../book/src/risk.md")]
    pub struct Risk;
}

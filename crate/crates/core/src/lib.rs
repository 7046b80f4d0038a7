//! Rule-based extraction of pathology features from papillary thyroid
//! cancer reports, hierarchical recurrence-risk classification, and the
//! evaluation and corpus tooling around them.
//!
//! The pipeline is `lexicon` → `segmentation` → `extraction` →
//! `classifier`, with `evaluation` scoring each stage and `corpus_io`
//! handling files and synthetic corpora.

pub mod classifier;
pub mod corpus_io;
pub mod evaluation;
pub mod extraction;
pub mod lexicon;
pub mod model;
pub mod segmentation;

pub use classifier::{classify, trigger_distribution, ClassifyError, Policy, RuleTable};
pub use extraction::{extract, to_feature_record, ExtractError};
pub use lexicon::{default_lexicon, load_lexicon, ExtractionLexicon, LexiconError};
pub use model::*;

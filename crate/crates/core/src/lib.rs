//! Scoring for speaker-attributed transcription.
//!
//! Computes the concatenated minimum-permutation character error rate
//! (cpCER): each speaker's segments are concatenated in time order, the
//! reference and hypothesis speaker sets are padded to equal size with blank
//! speakers, and the speaker pairing with the smallest summed edit distance
//! is normalized by the number of reference characters.
//!
//! ```
//! use cpcer::align::{score_session, SessionPair};
//! use cpcer::corpus::SpeakerStream;
//!
//! let pair = SessionPair::new(
//!     "S1",
//!     vec![SpeakerStream::from_text("A", "abcd")],
//!     vec![SpeakerStream::from_text("1", "abxd"), SpeakerStream::from_text("2", "q")],
//! )
//! .unwrap();
//! assert_eq!(score_session(&pair).unwrap().cpcer(), 50.0);
//! ```

pub mod align;
pub mod cli;
pub mod corpus;
pub mod editdist;
pub mod report;
pub mod textnorm;

pub use align::{score_session, AlignmentOutcome, AssignmentAlgorithm, SessionPair};
pub use corpus::{Corpus, Segment, SpeakerStream};
pub use report::{Report, ReportFormat};
pub use textnorm::{NormalizationConfig, TokenSequence};

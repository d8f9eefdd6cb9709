use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The three disjoint parameter partitions of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    Encoder,
    Lm,
    Joint,
}

/// Fine-tuning targets. `Decoder` is LM ∪ Joint; `All` is everything.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamGroup {
    Joint,
    #[serde(rename = "LM")]
    Lm,
    Decoder,
    Encoder,
    All,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] =
        [ParamGroup::Joint, ParamGroup::Lm, ParamGroup::Decoder, ParamGroup::Encoder, ParamGroup::All];

    pub fn contains(self, c: Component) -> bool {
        match self {
            ParamGroup::Joint => c == Component::Joint,
            ParamGroup::Lm => c == Component::Lm,
            ParamGroup::Decoder => matches!(c, Component::Lm | Component::Joint),
            ParamGroup::Encoder => c == Component::Encoder,
            ParamGroup::All => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Joint => "Joint",
            ParamGroup::Lm => "LM",
            ParamGroup::Decoder => "Decoder",
            ParamGroup::Encoder => "Encoder",
            ParamGroup::All => "All",
        }
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParamGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "joint" => Ok(ParamGroup::Joint),
            "lm" => Ok(ParamGroup::Lm),
            "decoder" => Ok(ParamGroup::Decoder),
            "encoder" => Ok(ParamGroup::Encoder),
            "all" => Ok(ParamGroup::All),
            _ => Err(Error::UnknownGroup(s.to_string())),
        }
    }
}

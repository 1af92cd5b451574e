//! Dialogue acts: (domain, intent, slot) tuples on each side of the
//! conversation. The slot sentinel `"none"` marks slot-free acts.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const NO_SLOT: &str = "none";
/// Domain of side-wide acts such as `bye`.
pub const GENERAL_DOMAIN: &str = "general";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserIntent {
    Inform,
    Request,
    Bye,
}

impl UserIntent {
    pub fn as_str(self) -> &'static str {
        match self {
            UserIntent::Inform => "inform",
            UserIntent::Request => "request",
            UserIntent::Bye => "bye",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inform" => Some(UserIntent::Inform),
            "request" => Some(UserIntent::Request),
            "bye" => Some(UserIntent::Bye),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SysIntent {
    Inform,
    Request,
    Book,
    Nooffer,
}

impl SysIntent {
    pub const ALL: [SysIntent; 4] =
        [SysIntent::Inform, SysIntent::Request, SysIntent::Book, SysIntent::Nooffer];

    pub fn as_str(self) -> &'static str {
        match self {
            SysIntent::Inform => "inform",
            SysIntent::Request => "request",
            SysIntent::Book => "book",
            SysIntent::Nooffer => "nooffer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inform" => Some(SysIntent::Inform),
            "request" => Some(SysIntent::Request),
            "book" => Some(SysIntent::Book),
            "nooffer" => Some(SysIntent::Nooffer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAct {
    pub domain: String,
    pub intent: UserIntent,
    pub slot: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<String>,
}

impl UserAct {
    pub fn inform(domain: &str, slot: &str, value: &str) -> Self {
        Self {
            domain: domain.into(),
            intent: UserIntent::Inform,
            slot: slot.into(),
            value: Some(value.into()),
        }
    }

    pub fn request(domain: &str, slot: &str) -> Self {
        Self { domain: domain.into(), intent: UserIntent::Request, slot: slot.into(), value: None }
    }

    pub fn bye() -> Self {
        Self {
            domain: GENERAL_DOMAIN.into(),
            intent: UserIntent::Bye,
            slot: NO_SLOT.into(),
            value: None,
        }
    }
}

impl fmt::Display for UserAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            Some(v) => write!(f, "{} {} {} {v}", self.domain, self.intent.as_str(), self.slot),
            None => write!(f, "{} {} {}", self.domain, self.intent.as_str(), self.slot),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SysAct {
    pub domain: String,
    pub intent: SysIntent,
    pub slot: String,
}

impl SysAct {
    pub fn new(domain: &str, intent: SysIntent, slot: &str) -> Self {
        Self { domain: domain.into(), intent, slot: slot.into() }
    }
}

impl fmt::Display for SysAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.domain, self.intent.as_str(), self.slot)
    }
}

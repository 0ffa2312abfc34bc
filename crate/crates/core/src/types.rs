use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u16);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(&self.0, f)
            }
        }

        impl From<u16> for $name {
            fn from(v: u16) -> Self {
                $name(v)
            }
        }
    };
}

id_type!(
    /// Identifies a floor request; unique for the lifetime of a conference.
    RequestId
);
id_type!(FloorId);
id_type!(UserId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RequestState {
    Pending,
    Accepted,
    Granted,
    Denied,
    Cancelled,
    Released,
    Revoked,
}

impl RequestState {
    pub const ALL: [RequestState; 7] = [
        RequestState::Pending,
        RequestState::Accepted,
        RequestState::Granted,
        RequestState::Denied,
        RequestState::Cancelled,
        RequestState::Released,
        RequestState::Revoked,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, RequestState::Denied | RequestState::Cancelled | RequestState::Released | RequestState::Revoked)
    }

    /// Waiting in the positional queue.
    pub fn is_queued(self) -> bool {
        matches!(self, RequestState::Pending | RequestState::Accepted)
    }

    /// Queued or holding the floor.
    pub fn is_live(self) -> bool {
        !self.is_terminal()
    }

    /// The legal transition table. `None` as the source stands for creation.
    pub fn can_transition(from: Option<RequestState>, to: RequestState) -> bool {
        use RequestState::*;
        match from {
            None => to == Pending,
            Some(Pending) => matches!(to, Accepted | Granted | Denied | Cancelled),
            Some(Accepted) => matches!(to, Granted | Cancelled | Denied),
            Some(Granted) => matches!(to, Released | Revoked),
            Some(_) => false,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RequestState::Pending => "PENDING",
            RequestState::Accepted => "ACCEPTED",
            RequestState::Granted => "GRANTED",
            RequestState::Denied => "DENIED",
            RequestState::Cancelled => "CANCELLED",
            RequestState::Released => "RELEASED",
            RequestState::Revoked => "REVOKED",
        }
    }
}

impl fmt::Display for RequestState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for RequestState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RequestState::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown request state {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Priority {
    #[default]
    Normal,
    /// Sorted ahead of every normal request that does not hold the floor.
    BusinessClass,
}

impl Priority {
    pub(crate) fn rank(self) -> u8 {
        match self {
            Priority::BusinessClass => 0,
            Priority::Normal => 1,
        }
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Priority::Normal => "NORMAL",
            Priority::BusinessClass => "BUSINESS_CLASS",
        })
    }
}

/// How a request entered the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    #[serde(rename = "RFID")]
    Rfid,
    #[serde(rename = "BFCP_CLIENT")]
    BfcpClient,
    #[serde(rename = "WEB")]
    Web,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Origin::Rfid => "RFID",
            Origin::BfcpClient => "BFCP_CLIENT",
            Origin::Web => "WEB",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FloorPolicy {
    /// Most requests that may hold the floor at once; at least 1.
    pub max_granted: u32,
    /// Grant new requests without waiting for the chair.
    pub auto_grant: bool,
}

impl FloorPolicy {
    pub fn new(max_granted: u32) -> FloorPolicy {
        FloorPolicy { max_granted, auto_grant: false }
    }

    pub fn is_valid(&self) -> bool {
        self.max_granted >= 1
    }
}

impl Default for FloorPolicy {
    fn default() -> Self {
        FloorPolicy::new(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloorRequestRecord {
    pub request_id: RequestId,
    pub floor_id: FloorId,
    pub user_id: UserId,
    pub display_name: String,
    pub origin: Origin,
    pub priority: Priority,
    pub state: RequestState,
    pub arrival_seq: u64,
    /// 1-based among queued (pending/accepted) requests, 0 otherwise.
    #[serde(rename = "position")]
    pub queue_position: u32,
    /// Order in which the floor was granted, if it ever was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grant_seq: Option<u64>,
    /// Order in which the request reached a terminal state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_seq: Option<u64>,
}

//! HTTP gateway client: queue snapshots, chair commands and the web
//! participant endpoints.

use floorctl_core::{FloorId, FloorPolicy, FloorRequestRecord, Priority, RequestId, UserId};
use serde::{Deserialize, Serialize};

use crate::error::ClientError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChairVerb {
    Accept,
    Deny,
    Revoke,
    RevokeAll,
    SetPriority,
    SetPolicy,
}

/// Body of a chair command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChairCommand {
    pub action: ChairVerb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<RequestId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_id: Option<FloorId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<Priority>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<FloorPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command_id: Option<String>,
}

impl ChairCommand {
    fn new(action: ChairVerb) -> ChairCommand {
        ChairCommand { action, request_id: None, floor_id: None, priority: None, policy: None, command_id: None }
    }

    pub fn on_request(action: ChairVerb, request: RequestId) -> ChairCommand {
        ChairCommand { request_id: Some(request), ..ChairCommand::new(action) }
    }

    pub fn revoke_all(floor: FloorId) -> ChairCommand {
        ChairCommand { floor_id: Some(floor), ..ChairCommand::new(ChairVerb::RevokeAll) }
    }

    pub fn set_priority(request: RequestId, priority: Priority) -> ChairCommand {
        ChairCommand { priority: Some(priority), ..ChairCommand::on_request(ChairVerb::SetPriority, request) }
    }

    pub fn set_policy(floor: FloorId, policy: FloorPolicy) -> ChairCommand {
        ChairCommand { floor_id: Some(floor), policy: Some(policy), ..ChairCommand::new(ChairVerb::SetPolicy) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct CommandResult {
    pub records: Vec<FloorRequestRecord>,
    #[serde(default)]
    pub policy: Option<FloorPolicy>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct FloorInfo {
    pub floor_id: FloorId,
    pub name: String,
    pub policy: FloorPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct WebParticipant {
    pub token: String,
    pub user_id: UserId,
    pub display_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WebActionKind {
    Request,
    Release,
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    error: String,
    message: String,
}

/// Client for one conference on the HTTP gateway.
#[derive(Debug, Clone)]
pub struct GatewayClient {
    http: reqwest::Client,
    base: String,
    chair_token: Option<String>,
}

impl GatewayClient {
    /// `base_url` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base_url: &str, conference_id: u32) -> GatewayClient {
        GatewayClient {
            http: reqwest::Client::new(),
            base: format!("{}/api/conf/{conference_id}", base_url.trim_end_matches('/')),
            chair_token: None,
        }
    }

    pub fn with_chair_token(mut self, token: impl Into<String>) -> GatewayClient {
        self.chair_token = Some(token.into());
        self
    }

    async fn parse<T: serde::de::DeserializeOwned>(response: reqwest::Response) -> Result<T, ClientError> {
        let status = response.status();
        if status.is_success() {
            return Ok(response.json().await?);
        }
        let text = response.text().await.unwrap_or_default();
        let (error, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => (b.error, b.message),
            Err(_) => (status.canonical_reason().unwrap_or("error").to_owned(), text),
        };
        Err(ClientError::Http { status: status.as_u16(), error, message })
    }

    pub async fn floors(&self) -> Result<Vec<FloorInfo>, ClientError> {
        GatewayClient::parse(self.http.get(format!("{}/floors", self.base)).send().await?).await
    }

    /// The floor's queue snapshot, in display order.
    pub async fn queue(&self, floor: u16) -> Result<Vec<FloorRequestRecord>, ClientError> {
        GatewayClient::parse(self.http.get(format!("{}/floors/{floor}/queue", self.base)).send().await?).await
    }

    pub async fn command(&self, cmd: &ChairCommand) -> Result<CommandResult, ClientError> {
        let token = self.chair_token.as_deref().unwrap_or_default();
        let r = self.http.post(format!("{}/chair/command", self.base)).bearer_auth(token).json(cmd).send().await?;
        GatewayClient::parse(r).await
    }

    pub async fn join(&self, display_name: &str) -> Result<WebParticipant, ClientError> {
        let body = serde_json::json!({ "display_name": display_name });
        GatewayClient::parse(self.http.post(format!("{}/participants", self.base)).json(&body).send().await?).await
    }

    pub async fn floor_action(
        &self,
        token: &str,
        kind: WebActionKind,
        floor: u16,
    ) -> Result<FloorRequestRecord, ClientError> {
        let body = serde_json::json!({ "kind": kind, "floor_id": floor });
        let r = self.http.post(format!("{}/floor-action", self.base)).bearer_auth(token).json(&body).send().await?;
        GatewayClient::parse(r).await
    }
}

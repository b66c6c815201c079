#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use comaguard_core::gateway::GatewayScript;
use comaguard_core::{Contact, ContactList, EventKind, OutputEvent};
use comaguard_service::{serve, MockGateway, Registry, ServiceConfig};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub fn abe() -> ContactList {
    ContactList::new(vec![
        Contact::new("A", "+15550100"),
        Contact::new("B", "+15550101"),
        Contact::emergency("E", "112"),
    ])
    .unwrap()
}

pub struct Server {
    pub base: String,
    pub registry: Arc<Registry>,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl Server {
    pub async fn start(mut config: ServiceConfig, data_dir: Option<&Path>, gateway_url: Option<&str>) -> Self {
        config.options.data_dir = data_dir.map(Path::to_path_buf);
        config.options.gateway_url = gateway_url.map(str::to_string);
        config.options.gateway_timeout_ms = 1_000;
        let registry = Registry::open(config).unwrap();
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr: SocketAddr = listener.local_addr().unwrap();
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(serve(listener, registry.clone(), async {
            let _ = rx.await;
        }));
        Self {
            base: format!("http://{addr}"),
            registry,
            stop: Some(tx),
            task,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.task.await.unwrap().unwrap();
    }
}

pub async fn start_mock(script: GatewayScript) -> (String, Arc<MockGateway>) {
    let mock = MockGateway::new(script);
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = mock.router();
    tokio::spawn(async move { axum::serve(listener, app).await });
    (format!("http://{addr}"), mock)
}

pub fn kinds(events: &[OutputEvent]) -> Vec<&'static str> {
    events.iter().map(|e| e.kind.name()).collect()
}

pub fn attempt_ids(events: &[OutputEvent]) -> Vec<String> {
    events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::ContactAttempt { contact_id, .. } => Some(contact_id.clone()),
            _ => None,
        })
        .collect()
}

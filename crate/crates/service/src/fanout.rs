//! Telemetry fan-out: every client gets the current snapshot, then the live
//! stream. Each client has its own bounded backlog; when it falls behind the
//! oldest records are dropped for that client only, and publishing never
//! waits.

use std::sync::{Arc, Mutex};

use focusloop::TelemetryRecord;
use tokio::sync::broadcast;

#[derive(Debug, Clone, PartialEq)]
pub struct Published {
    pub t_us: u64,
    pub json: Arc<str>,
}

impl Published {
    fn of(record: &TelemetryRecord) -> Self {
        Published {
            t_us: record.t_us,
            json: record.to_json().into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fanout {
    tx: broadcast::Sender<Published>,
    latest: Arc<Mutex<Published>>,
}

impl Fanout {
    pub fn new(per_client_queue: usize, initial: &TelemetryRecord) -> Self {
        let (tx, _) = broadcast::channel(per_client_queue.max(1));
        Fanout {
            tx,
            latest: Arc::new(Mutex::new(Published::of(initial))),
        }
    }

    pub fn publish(&self, record: &TelemetryRecord) {
        let item = Published::of(record);
        let mut latest = self.latest.lock().expect("fan-out lock");
        *latest = item.clone();
        // No receivers is fine: nobody is watching yet.
        let _ = self.tx.send(item);
    }

    pub fn latest(&self) -> Published {
        self.latest.lock().expect("fan-out lock").clone()
    }

    pub fn subscribe(&self) -> Subscription {
        // Holding the lock keeps publish from slipping a record between the
        // snapshot and the subscription.
        let latest = self.latest.lock().expect("fan-out lock");
        Subscription {
            rx: self.tx.subscribe(),
            snapshot: Some(latest.clone()),
            last_t_us: None,
            dropped: 0,
        }
    }
}

#[derive(Debug)]
pub struct Subscription {
    rx: broadcast::Receiver<Published>,
    snapshot: Option<Published>,
    last_t_us: Option<u64>,
    dropped: u64,
}

impl Subscription {
    /// Next record for this client; `None` once the publisher is gone.
    pub async fn next(&mut self) -> Option<Published> {
        if let Some(snap) = self.snapshot.take() {
            self.last_t_us = Some(snap.t_us);
            return Some(snap);
        }
        loop {
            match self.rx.recv().await {
                Ok(item) => {
                    if self.last_t_us.is_some_and(|t| item.t_us <= t) {
                        continue;
                    }
                    self.last_t_us = Some(item.t_us);
                    return Some(item);
                }
                Err(broadcast::error::RecvError::Lagged(n)) => self.dropped += n,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    }

    /// Records skipped because this client fell behind.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use focusloop::{Engine, EngineConfig};

    fn rec(t_us: u64) -> TelemetryRecord {
        let mut r = Engine::new(EngineConfig::default()).unwrap().snapshot();
        r.t_us = t_us;
        r
    }

    #[tokio::test]
    async fn snapshot_comes_first() {
        let fan = Fanout::new(8, &rec(0));
        fan.publish(&rec(100));
        let mut sub = fan.subscribe();
        fan.publish(&rec(200));
        assert_eq!(sub.next().await.unwrap().t_us, 100);
        assert_eq!(sub.next().await.unwrap().t_us, 200);
    }

    #[tokio::test]
    async fn slow_client_loses_oldest_only() {
        let fan = Fanout::new(4, &rec(0));
        let mut slow = fan.subscribe();
        let mut fast = fan.subscribe();
        let mut fast_seen = vec![fast.next().await.unwrap().t_us];
        for t in 1..=10 {
            fan.publish(&rec(t * 100));
            fast_seen.push(fast.next().await.unwrap().t_us);
        }
        let mut slow_seen = Vec::new();
        for _ in 0..5 {
            slow_seen.push(slow.next().await.unwrap().t_us);
        }
        assert_eq!(fast_seen, (0..=10).map(|t| t * 100).collect::<Vec<_>>());
        assert_eq!(slow_seen, vec![0, 700, 800, 900, 1000]);
        assert_eq!(slow.dropped(), 6);
        assert_eq!(fast.dropped(), 0);
    }

    #[tokio::test]
    async fn publishing_without_clients_keeps_latest() {
        let fan = Fanout::new(2, &rec(0));
        for t in 1..100 {
            fan.publish(&rec(t));
        }
        assert_eq!(fan.latest().t_us, 99);
    }
}

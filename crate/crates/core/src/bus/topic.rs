//! Typed publish/subscribe topics.

use std::any::Any;
use std::collections::HashMap;
use std::marker::PhantomData;
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

use crate::lp::{parse_atom, Atom};

pub const DEFAULT_QUEUE: usize = 64;

/// A message type that can travel on a topic. `KIND` names it in a
/// `package/Type` namespace.
pub trait Message: Clone + Send + 'static {
    const KIND: &'static str;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("topic {topic} carries {expected}, not {found}")]
    KindMismatch {
        topic: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("topic {0} has not been advertised")]
    NotAdvertised(String),
    #[error("no action server named {0}")]
    UnknownServer(String),
    #[error("action server {0} is already registered")]
    DuplicateServer(String),
    #[error("queue full on topic {0}")]
    Full(String),
    #[error("not a ground atom: {0}")]
    BadFact(String),
}

/// An interface name plus ground facts in text form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InterfaceMsg {
    pub interface: String,
    pub facts: Vec<String>,
}

impl InterfaceMsg {
    pub fn new(interface: impl Into<String>, facts: Vec<String>) -> Self {
        InterfaceMsg {
            interface: interface.into(),
            facts,
        }
    }

    /// Parses every fact as a ground atom.
    pub fn atoms(&self) -> Result<Vec<Atom>, BusError> {
        self.facts
            .iter()
            .map(|f| match parse_atom(f) {
                Ok(a) if a.is_ground() => Ok(a),
                _ => Err(BusError::BadFact(f.clone())),
            })
            .collect()
    }
}

impl Message for InterfaceMsg {
    const KIND: &'static str = "planner_msgs/InterfaceIO";
}

struct Topic {
    kind: &'static str,
    advertised: bool,
    /// `Vec<SyncSender<M>>` for the topic's message type.
    subscribers: Arc<Mutex<Box<dyn Any + Send>>>,
}

/// In-process many-to-many message bus. Cloning shares the same bus.
#[derive(Clone, Default)]
pub struct Bus {
    topics: Arc<Mutex<HashMap<String, Topic>>>,
    capacity: Option<usize>,
    pub(crate) actions: Arc<Mutex<HashMap<String, Box<dyn Any + Send>>>>,
}

impl Bus {
    pub fn new() -> Self {
        Bus::default()
    }

    /// A bus whose subscriber queues hold `capacity` messages.
    pub fn with_capacity(capacity: usize) -> Self {
        Bus {
            capacity: Some(capacity.max(1)),
            ..Bus::default()
        }
    }

    fn capacity(&self) -> usize {
        self.capacity.unwrap_or(DEFAULT_QUEUE)
    }

    fn topic<M: Message>(
        &self,
        name: &str,
        advertise: bool,
    ) -> Result<Arc<Mutex<Box<dyn Any + Send>>>, BusError> {
        let mut topics = self.topics.lock().unwrap();
        let topic = topics.entry(name.to_string()).or_insert_with(|| Topic {
            kind: M::KIND,
            advertised: false,
            subscribers: Arc::new(Mutex::new(Box::new(Vec::<SyncSender<M>>::new()))),
        });
        if topic.kind != M::KIND {
            return Err(BusError::KindMismatch {
                topic: name.to_string(),
                expected: topic.kind,
                found: M::KIND,
            });
        }
        topic.advertised |= advertise;
        if !topic.advertised {
            return Err(BusError::NotAdvertised(name.to_string()));
        }
        Ok(topic.subscribers.clone())
    }

    /// Declares that messages of type `M` will be published on `topic`.
    pub fn advertise<M: Message>(&self, topic: &str) -> Result<Publisher<M>, BusError> {
        let subscribers = self.topic::<M>(topic, true)?;
        Ok(Publisher {
            topic: topic.to_string(),
            subscribers,
            _kind: PhantomData,
        })
    }

    /// Publishes on an advertised topic, blocking while a subscriber queue
    /// is full. Returns the number of subscribers reached.
    pub fn publish<M: Message>(&self, topic: &str, msg: M) -> Result<usize, BusError> {
        let subscribers = self.topic::<M>(topic, false)?;
        Ok(deliver(&subscribers, msg))
    }

    /// Receives every message published on `topic` from now on.
    pub fn subscribe<M: Message>(&self, topic: &str) -> Result<Subscription<M>, BusError> {
        let subscribers = {
            let mut topics = self.topics.lock().unwrap();
            let t = topics.entry(topic.to_string()).or_insert_with(|| Topic {
                kind: M::KIND,
                advertised: false,
                subscribers: Arc::new(Mutex::new(Box::new(Vec::<SyncSender<M>>::new()))),
            });
            if t.kind != M::KIND {
                return Err(BusError::KindMismatch {
                    topic: topic.to_string(),
                    expected: t.kind,
                    found: M::KIND,
                });
            }
            t.subscribers.clone()
        };
        let (tx, rx) = mpsc::sync_channel(self.capacity());
        let mut guard = subscribers.lock().unwrap();
        guard
            .downcast_mut::<Vec<SyncSender<M>>>()
            .expect("topic kind checked")
            .push(tx);
        Ok(Subscription { rx })
    }

    /// Subscribes and runs `handler` for each message on its own thread.
    /// The thread ends when the bus and all publishers are dropped.
    pub fn subscribe_with<M, F>(
        &self,
        topic: &str,
        mut handler: F,
    ) -> Result<JoinHandle<()>, BusError>
    where
        M: Message,
        F: FnMut(M) + Send + 'static,
    {
        let sub = self.subscribe::<M>(topic)?;
        Ok(thread::spawn(move || {
            while let Some(msg) = sub.recv() {
                handler(msg);
            }
        }))
    }
}

fn deliver<M: Message>(subscribers: &Mutex<Box<dyn Any + Send>>, msg: M) -> usize {
    // Holding the topic lock for the whole fan-out gives every subscriber
    // the same order.
    let mut guard = subscribers.lock().unwrap();
    let list = guard
        .downcast_mut::<Vec<SyncSender<M>>>()
        .expect("topic kind checked");
    list.retain(|tx| tx.send(msg.clone()).is_ok());
    list.len()
}

/// Publishing end of an advertised topic.
pub struct Publisher<M: Message> {
    topic: String,
    subscribers: Arc<Mutex<Box<dyn Any + Send>>>,
    _kind: PhantomData<fn(M)>,
}

impl<M: Message> Clone for Publisher<M> {
    fn clone(&self) -> Self {
        Publisher {
            topic: self.topic.clone(),
            subscribers: self.subscribers.clone(),
            _kind: PhantomData,
        }
    }
}

impl<M: Message> Publisher<M> {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    /// Blocks while a subscriber queue is full.
    pub fn publish(&self, msg: M) -> usize {
        deliver(&self.subscribers, msg)
    }

    /// Fails instead of blocking when a subscriber queue is full; the
    /// subscribers before it in the list have already received the message.
    pub fn try_publish(&self, msg: M) -> Result<usize, BusError> {
        let mut guard = self.subscribers.lock().unwrap();
        let list = guard
            .downcast_mut::<Vec<SyncSender<M>>>()
            .expect("topic kind checked");
        let mut full = false;
        list.retain(|tx| match tx.try_send(msg.clone()) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                full = true;
                true
            }
            Err(TrySendError::Disconnected(_)) => false,
        });
        if full {
            Err(BusError::Full(self.topic.clone()))
        } else {
            Ok(list.len())
        }
    }
}

/// Receiving end of a topic.
pub struct Subscription<M: Message> {
    rx: Receiver<M>,
}

impl<M: Message> Subscription<M> {
    /// Blocks for the next message; `None` once no publisher can send.
    pub fn recv(&self) -> Option<M> {
        self.rx.recv().ok()
    }

    pub fn try_recv(&self) -> Option<M> {
        self.rx.try_recv().ok()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<M> {
        self.rx.recv_timeout(timeout).ok()
    }

    /// Everything queued right now.
    pub fn drain(&self) -> Vec<M> {
        self.rx.try_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Ping(u32);
    impl Message for Ping {
        const KIND: &'static str = "test_msgs/Ping";
    }

    #[derive(Debug, Clone)]
    struct Pong;
    impl Message for Pong {
        const KIND: &'static str = "test_msgs/Pong";
    }

    #[test]
    fn every_subscriber_gets_the_message() {
        let bus = Bus::new();
        let p = bus.advertise::<Ping>("ping").unwrap();
        let a = bus.subscribe::<Ping>("ping").unwrap();
        let b = bus.subscribe::<Ping>("ping").unwrap();
        assert_eq!(p.publish(Ping(7)), 2);
        assert_eq!(a.try_recv(), Some(Ping(7)));
        assert_eq!(b.try_recv(), Some(Ping(7)));
    }

    #[test]
    fn no_replay_for_late_subscribers() {
        let bus = Bus::new();
        let p = bus.advertise::<Ping>("ping").unwrap();
        p.publish(Ping(1));
        let late = bus.subscribe::<Ping>("ping").unwrap();
        assert_eq!(late.try_recv(), None);
    }

    #[test]
    fn kind_and_advertise_are_checked() {
        let bus = Bus::new();
        assert_eq!(
            bus.publish("ping", Ping(1)),
            Err(BusError::NotAdvertised("ping".into()))
        );
        bus.advertise::<Ping>("ping").unwrap();
        assert!(matches!(
            bus.advertise::<Pong>("ping"),
            Err(BusError::KindMismatch { .. })
        ));
        assert!(bus.subscribe::<Pong>("ping").is_err());
        assert_eq!(bus.publish("ping", Ping(1)), Ok(0));
    }

    #[test]
    fn try_publish_reports_full_queue() {
        let bus = Bus::with_capacity(1);
        let p = bus.advertise::<Ping>("ping").unwrap();
        let s = bus.subscribe::<Ping>("ping").unwrap();
        assert_eq!(p.try_publish(Ping(1)), Ok(1));
        assert!(matches!(p.try_publish(Ping(2)), Err(BusError::Full(_))));
        assert_eq!(s.drain(), vec![Ping(1)]);
    }

    #[test]
    fn handler_thread_sees_messages_in_order() {
        let bus = Bus::new();
        let p = bus.advertise::<Ping>("ping").unwrap();
        let (tx, rx) = mpsc::channel();
        let h = bus
            .subscribe_with::<Ping, _>("ping", move |m| tx.send(m.0).unwrap())
            .unwrap();
        for i in 0..100 {
            p.publish(Ping(i));
        }
        let got: Vec<u32> = rx.iter().take(100).collect();
        assert_eq!(got, (0..100).collect::<Vec<_>>());
        drop(p);
        drop(bus);
        h.join().unwrap();
    }

    #[test]
    fn interface_msg_facts_parse() {
        let m = InterfaceMsg::new("move_base", vec!["_action(move_base,office2,1)".into()]);
        assert_eq!(m.atoms().unwrap()[0].pred, "_action");
        assert!(InterfaceMsg::new("x", vec!["p(X)".into()]).atoms().is_err());
    }
}

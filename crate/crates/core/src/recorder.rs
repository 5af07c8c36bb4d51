//! Execution-phase event recorder.
//!
//! Host instrumentation calls the record operations from any thread. A single sequencer lock
//! assigns object ids, call ids and logical times, encodes the line and hands it to a bounded
//! channel while still holding the lock, so the file order is the clock order. A dedicated
//! writer thread drains the channel in batches; when the channel is full, producers block.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;

use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    CapturedValue, Event, InstantiatedPlan, LogicalTime, ObjectId, ObjectRefKey,
    ReconstructionPlan, SerializationRecord, StaticConstant,
};
use crate::wire::{self, LogEntry, TRACE_FORMAT};

/// Host-side object identity (for example a heap slot or an address).
pub type Identity = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct RecorderConfig {
    pub max_sequence_length: usize,
    pub max_depth: usize,
    pub queue_capacity: usize,
    pub batch_size: usize,
}

impl Default for RecorderConfig {
    fn default() -> Self {
        RecorderConfig { max_sequence_length: 25, max_depth: 8, queue_capacity: 65_536, batch_size: 1_024 }
    }
}

/// A host value as handed to the recorder. Objects are referenced by identity only.
#[derive(Debug, Clone, PartialEq)]
pub enum RuntimeValue {
    Null,
    Int(i64),
    Double(f64),
    Bool(bool),
    Text(String),
    Enum { type_name: String, constant: String },
    Sequence(Vec<RuntimeValue>),
    Map(Vec<(RuntimeValue, RuntimeValue)>),
    Object(Identity),
}

/// Read access to live objects, used to embed structure-based plans.
pub trait ObjectInspector {
    fn type_name(&self, identity: Identity) -> String;
    fn fields(&self, identity: Identity) -> Vec<(String, RuntimeValue)>;
}

/// An inspector for hosts that never embed plans.
pub struct NoInspector;

impl ObjectInspector for NoInspector {
    fn type_name(&self, _: Identity) -> String {
        String::new()
    }

    fn fields(&self, _: Identity) -> Vec<(String, RuntimeValue)> {
        Vec::new()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("cannot encode event: {0}")]
    Encode(String),
    #[error("recorder failed: {0}")]
    Failed(String),
}

/// Where encoded lines go.
pub enum Sink {
    File(PathBuf),
    Writer(Box<dyn Write + Send>),
}

/// An in-memory sink whose contents can be read after the recorder finishes.
#[derive(Clone, Default)]
pub struct MemorySink(Arc<Mutex<Vec<u8>>>);

impl MemorySink {
    pub fn new() -> Self {
        MemorySink::default()
    }

    pub fn sink(&self) -> Sink {
        Sink::Writer(Box::new(self.clone()))
    }

    pub fn contents(&self) -> String {
        String::from_utf8_lossy(&self.0.lock().unwrap_or_else(|e| e.into_inner())).into_owned()
    }
}

impl Write for MemorySink {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecorderStats {
    pub events: u64,
    pub records: u64,
    pub lines_written: u64,
    /// Sends that found the queue full and had to wait for the writer.
    pub blocked_sends: u64,
}

#[derive(Default)]
struct Sequencer {
    registry: HashMap<Identity, ObjectId>,
    known_ids: HashSet<ObjectId>,
    next_object: ObjectId,
    next_call: u64,
    open_calls: HashSet<u64>,
    clock: LogicalTime,
    events: u64,
    records: u64,
}

struct Shared {
    config: RecorderConfig,
    seq: Mutex<Sequencer>,
    /// Latest issued logical time, readable without the lock.
    clock: AtomicU64,
    failed: AtomicBool,
    failure: Mutex<Option<String>>,
    blocked: AtomicU64,
    sender: Mutex<Option<Sender<String>>>,
}

/// The recorder handle. Cheap to clone; all clones share one trace.
#[derive(Clone)]
pub struct Recorder {
    shared: Arc<Shared>,
    writer: Arc<Mutex<Option<JoinHandle<u64>>>>,
}

/// A serialization whose receiver and arguments were captured at method start.
#[derive(Debug, Clone)]
pub struct PendingRecord {
    point_id: String,
    receiver: CapturedValue,
    args: Vec<CapturedValue>,
    embedded: BTreeMap<ObjectRefKey, InstantiatedPlan>,
}

fn writer_loop(rx: Receiver<String>, mut out: Box<dyn Write + Send>, batch: usize, shared: Arc<Shared>) -> u64 {
    let mut written = 0u64;
    let mut buf = String::new();
    let mut pending = 0usize;
    let fail = |msg: String| {
        shared.failed.store(true, Ordering::SeqCst);
        let mut f = shared.failure.lock().unwrap_or_else(|e| e.into_inner());
        f.get_or_insert(msg);
    };
    let mut flush = |buf: &mut String, pending: &mut usize, out: &mut Box<dyn Write + Send>| {
        if *pending == 0 {
            return;
        }
        if !shared.failed.load(Ordering::SeqCst) {
            if let Err(e) = out.write_all(buf.as_bytes()) {
                fail(format!("write failed: {e}"));
            } else {
                written += *pending as u64;
            }
        }
        buf.clear();
        *pending = 0;
    };
    // Keep draining after a failure so producers never block forever.
    while let Ok(line) = rx.recv() {
        buf.push_str(&line);
        buf.push('\n');
        pending += 1;
        while pending < batch {
            match rx.try_recv() {
                Ok(line) => {
                    buf.push_str(&line);
                    buf.push('\n');
                    pending += 1;
                }
                Err(_) => break,
            }
        }
        flush(&mut buf, &mut pending, &mut out);
    }
    flush(&mut buf, &mut pending, &mut out);
    if let Err(e) = out.flush() {
        fail(format!("flush failed: {e}"));
    }
    written
}

impl Recorder {
    pub fn new(config: RecorderConfig, sink: Sink) -> Result<Recorder, RecordError> {
        if config.queue_capacity == 0 || config.batch_size == 0 {
            return Err(RecordError::Contract("queue capacity and batch size must be positive".into()));
        }
        let mut out: Box<dyn Write + Send> = match sink {
            Sink::File(path) => Box::new(BufWriter::new(
                File::create(&path).map_err(|e| RecordError::Failed(format!("{}: {e}", path.display())))?,
            )),
            Sink::Writer(w) => w,
        };
        out.write_all(format!("{}\n", wire::encode_header(TRACE_FORMAT)).as_bytes()).map_err(|e| RecordError::Failed(e.to_string()))?;
        let (tx, rx) = bounded(config.queue_capacity);
        let batch = config.batch_size;
        let shared = Arc::new(Shared {
            config,
            seq: Mutex::new(Sequencer::default()),
            clock: AtomicU64::new(0),
            failed: AtomicBool::new(false),
            failure: Mutex::new(None),
            blocked: AtomicU64::new(0),
            sender: Mutex::new(Some(tx)),
        });
        let for_writer = shared.clone();
        let handle = std::thread::Builder::new()
            .name("plaincode-trace-writer".into())
            .spawn(move || writer_loop(rx, out, batch, for_writer))
            .map_err(|e| RecordError::Failed(e.to_string()))?;
        Ok(Recorder { shared, writer: Arc::new(Mutex::new(Some(handle))) })
    }

    pub fn config(&self) -> &RecorderConfig {
        &self.shared.config
    }

    /// The most recently issued logical time.
    pub fn now(&self) -> LogicalTime {
        self.shared.clock.load(Ordering::SeqCst)
    }

    pub fn object_id(&self, identity: Identity) -> Option<ObjectId> {
        self.lock().ok()?.registry.get(&identity).copied()
    }

    fn lock(&self) -> Result<MutexGuard<'_, Sequencer>, RecordError> {
        if self.shared.failed.load(Ordering::SeqCst) {
            let msg = self.shared.failure.lock().unwrap_or_else(|e| e.into_inner()).clone();
            return Err(RecordError::Failed(msg.unwrap_or_default()));
        }
        Ok(self.shared.seq.lock().unwrap_or_else(|e| e.into_inner()))
    }

    fn tick(&self, seq: &mut Sequencer) -> LogicalTime {
        seq.clock += 1;
        self.shared.clock.store(seq.clock, Ordering::SeqCst);
        seq.clock
    }

    fn send(&self, line: String) -> Result<(), RecordError> {
        let guard = self.shared.sender.lock().unwrap_or_else(|e| e.into_inner());
        let tx = guard.as_ref().ok_or_else(|| RecordError::Failed("recorder already finished".into()))?;
        match tx.try_send(line) {
            Ok(()) => Ok(()),
            Err(TrySendError::Full(line)) => {
                self.shared.blocked.fetch_add(1, Ordering::Relaxed);
                tx.send(line).map_err(|_| RecordError::Failed("trace writer stopped".into()))
            }
            Err(TrySendError::Disconnected(_)) => Err(RecordError::Failed("trace writer stopped".into())),
        }
    }

    fn emit(&self, seq: &mut Sequencer, entry: LogEntry) -> Result<(), RecordError> {
        let line = wire::encode_entry(&entry).map_err(|e| RecordError::Encode(e.to_string()))?;
        match entry {
            LogEntry::Record(_) => seq.records += 1,
            _ => seq.events += 1,
        }
        self.send(line)
    }

    /// Captures a value at the current logical time.
    pub fn capture(&self, value: &RuntimeValue) -> Result<CapturedValue, RecordError> {
        let seq = self.lock()?;
        Ok(self.capture_locked(&seq, value, self.shared.config.max_depth, seq.clock))
    }

    fn capture_locked(&self, seq: &Sequencer, value: &RuntimeValue, depth: usize, now: LogicalTime) -> CapturedValue {
        let bound = self.shared.config.max_sequence_length;
        match value {
            RuntimeValue::Null => CapturedValue::Null,
            RuntimeValue::Int(v) => CapturedValue::int(*v),
            RuntimeValue::Double(v) => CapturedValue::double(*v),
            RuntimeValue::Bool(v) => CapturedValue::boolean(*v),
            RuntimeValue::Text(s) => CapturedValue::text(s.clone()),
            RuntimeValue::Enum { type_name, constant } => CapturedValue::enum_constant(type_name, constant),
            RuntimeValue::Object(identity) => match seq.registry.get(identity) {
                Some(id) => CapturedValue::object(*id, now),
                None => CapturedValue::Opaque { type_name: String::new() },
            },
            RuntimeValue::Sequence(items) if depth == 0 => {
                CapturedValue::Sequence { elements: Vec::new(), truncated: !items.is_empty() }
            }
            RuntimeValue::Map(entries) if depth == 0 => {
                CapturedValue::MapValue { entries: Vec::new(), truncated: !entries.is_empty() }
            }
            RuntimeValue::Sequence(items) => CapturedValue::Sequence {
                elements: items.iter().take(bound).map(|v| self.capture_locked(seq, v, depth - 1, now)).collect(),
                truncated: items.len() > bound,
            },
            RuntimeValue::Map(entries) => CapturedValue::MapValue {
                entries: entries
                    .iter()
                    .take(bound)
                    .map(|(k, v)| {
                        (self.capture_locked(seq, k, depth - 1, now), self.capture_locked(seq, v, depth - 1, now))
                    })
                    .collect(),
                truncated: entries.len() > bound,
            },
        }
    }

    /// Registers a freshly constructed object. `args` are captured by the caller before the
    /// constructor body ran; `initial_fields` are captured now.
    pub fn record_construct(
        &self,
        identity: Identity,
        type_name: &str,
        constructor_name: &str,
        args: Vec<CapturedValue>,
        initial_fields: &[(String, RuntimeValue)],
    ) -> Result<ObjectId, RecordError> {
        let mut seq = self.lock()?;
        if seq.registry.contains_key(&identity) {
            return Err(RecordError::Contract(format!("identity {identity} is already registered")));
        }
        seq.next_object += 1;
        let id = seq.next_object;
        seq.registry.insert(identity, id);
        seq.known_ids.insert(id);
        let now = seq.clock;
        let initial_fields = initial_fields
            .iter()
            .map(|(k, v)| (k.clone(), self.capture_locked(&seq, v, self.shared.config.max_depth, now)))
            .collect();
        let time = self.tick(&mut seq);
        let event = Event::ConstructEvent {
            time,
            object_id: id,
            type_name: type_name.to_string(),
            constructor_name: constructor_name.to_string(),
            args,
            initial_fields,
        };
        self.emit(&mut seq, LogEntry::Event(event))?;
        Ok(id)
    }

    pub fn record_method_start(
        &self,
        receiver: ObjectId,
        qualified_method_name: &str,
        args: &[RuntimeValue],
    ) -> Result<u64, RecordError> {
        let mut seq = self.lock()?;
        if !seq.known_ids.contains(&receiver) {
            return Err(RecordError::Contract(format!("unknown receiver {receiver}")));
        }
        seq.next_call += 1;
        let call_id = seq.next_call;
        seq.open_calls.insert(call_id);
        let now = seq.clock;
        let args = args.iter().map(|v| self.capture_locked(&seq, v, self.shared.config.max_depth, now)).collect();
        let time = self.tick(&mut seq);
        let event = Event::MethodStartEvent {
            time,
            call_id,
            receiver,
            qualified_method_name: qualified_method_name.to_string(),
            args,
        };
        self.emit(&mut seq, LogEntry::Event(event))?;
        Ok(call_id)
    }

    pub fn record_method_end(&self, call_id: u64, abnormal: bool) -> Result<(), RecordError> {
        let mut seq = self.lock()?;
        if !seq.open_calls.remove(&call_id) {
            return Err(RecordError::Contract(format!("call {call_id} is not open")));
        }
        let time = self.tick(&mut seq);
        self.emit(&mut seq, LogEntry::Event(Event::MethodEndEvent { time, call_id, abnormal }))
    }

    pub fn record_field_set(
        &self,
        receiver: ObjectId,
        field_name: &str,
        old_value: &RuntimeValue,
        new_value: &RuntimeValue,
    ) -> Result<(), RecordError> {
        let mut seq = self.lock()?;
        if !seq.known_ids.contains(&receiver) {
            return Err(RecordError::Contract(format!("unknown receiver {receiver}")));
        }
        let now = seq.clock;
        let depth = self.shared.config.max_depth;
        let old_value = self.capture_locked(&seq, old_value, depth, now);
        let new_value = self.capture_locked(&seq, new_value, depth, now);
        let time = self.tick(&mut seq);
        let event = Event::FieldSetEvent { time, receiver, field_name: field_name.to_string(), old_value, new_value };
        self.emit(&mut seq, LogEntry::Event(event))
    }

    /// Notes that a public static constant holds a registered object.
    pub fn record_static_constant(&self, type_name: &str, field_name: &str, identity: Identity) -> Result<bool, RecordError> {
        let mut seq = self.lock()?;
        let Some(&object_id) = seq.registry.get(&identity) else { return Ok(false) };
        let time = self.tick(&mut seq);
        let constant = StaticConstant { type_name: type_name.into(), field_name: field_name.into(), object_id };
        self.emit(&mut seq, LogEntry::StaticConstant { time, constant })?;
        Ok(true)
    }

    /// Captures receiver and arguments at the start of a serialization point.
    pub fn begin_serialization(
        &self,
        point_id: &str,
        receiver: &RuntimeValue,
        args: &[RuntimeValue],
        inspector: &dyn ObjectInspector,
        plans: &BTreeMap<String, ReconstructionPlan>,
    ) -> Result<PendingRecord, RecordError> {
        let seq = self.lock()?;
        let now = seq.clock;
        let depth = self.shared.config.max_depth;
        let receiver = self.capture_locked(&seq, receiver, depth, now);
        let args: Vec<_> = args.iter().map(|v| self.capture_locked(&seq, v, depth, now)).collect();
        let mut embedded = BTreeMap::new();
        let roots: Vec<CapturedValue> = std::iter::once(receiver.clone()).chain(args.iter().cloned()).collect();
        self.embed_plans(&seq, &roots, inspector, plans, &mut embedded);
        Ok(PendingRecord { point_id: point_id.to_string(), receiver, args, embedded })
    }

    /// Completes a serialization with the outcome of the call and persists the record.
    pub fn complete_serialization(
        &self,
        pending: PendingRecord,
        return_value: Option<&RuntimeValue>,
        post_receiver: Option<&RuntimeValue>,
        inspector: &dyn ObjectInspector,
        plans: &BTreeMap<String, ReconstructionPlan>,
    ) -> Result<SerializationRecord, RecordError> {
        let mut seq = self.lock()?;
        let now = seq.clock;
        let depth = self.shared.config.max_depth;
        let return_value = return_value.map(|v| self.capture_locked(&seq, v, depth, now));
        let post_receiver = post_receiver.map(|v| self.capture_locked(&seq, v, depth, now));
        let mut embedded = pending.embedded;
        let roots: Vec<CapturedValue> = return_value.iter().chain(post_receiver.iter()).cloned().collect();
        self.embed_plans(&seq, &roots, inspector, plans, &mut embedded);
        let time = self.tick(&mut seq);
        let record = SerializationRecord {
            point_id: pending.point_id,
            receiver: pending.receiver,
            args: pending.args,
            return_value,
            post_receiver,
            time,
            embedded_plans: embedded,
        };
        self.emit(&mut seq, LogEntry::Record(record.clone()))?;
        Ok(record)
    }

    /// One-shot serialization of values with no surrounding call.
    pub fn request_serialization(
        &self,
        point_id: &str,
        receiver: &RuntimeValue,
        args: &[RuntimeValue],
        return_value: Option<&RuntimeValue>,
        inspector: &dyn ObjectInspector,
        plans: &BTreeMap<String, ReconstructionPlan>,
    ) -> Result<SerializationRecord, RecordError> {
        let pending = self.begin_serialization(point_id, receiver, args, inspector, plans)?;
        self.complete_serialization(pending, return_value, None, inspector, plans)
    }

    /// Embeds an instantiated plan for every referenced object whose type has one. Field
    /// values are captured at the reference's time; nested objects follow up to the depth bound.
    fn embed_plans(
        &self,
        seq: &Sequencer,
        roots: &[CapturedValue],
        inspector: &dyn ObjectInspector,
        plans: &BTreeMap<String, ReconstructionPlan>,
        out: &mut BTreeMap<ObjectRefKey, InstantiatedPlan>,
    ) {
        if plans.is_empty() {
            return;
        }
        let by_id: HashMap<ObjectId, Identity> = seq.registry.iter().map(|(k, v)| (*v, *k)).collect();
        let mut pending: Vec<(ObjectRefKey, usize)> = Vec::new();
        for r in roots {
            pending.extend(r.object_refs().into_iter().map(|k| (k, self.shared.config.max_depth)));
        }
        while let Some((key, depth)) = pending.pop() {
            if out.contains_key(&key) || depth == 0 {
                continue;
            }
            let Some(&identity) = by_id.get(&key.object_id) else { continue };
            let type_name = inspector.type_name(identity);
            let Some(plan) = plans.get(&type_name) else { continue };
            let values: BTreeMap<String, CapturedValue> = inspector
                .fields(identity)
                .iter()
                .map(|(k, v)| (k.clone(), self.capture_locked(seq, v, depth - 1, key.logical_time)))
                .collect();
            let Ok(inst) = crate::synth::instantiate_plan(plan, &values) else { continue };
            for a in &inst.actions {
                for v in &a.arguments {
                    pending.extend(v.object_refs().into_iter().map(|k| (k, depth - 1)));
                }
            }
            out.insert(key, inst);
        }
    }

    /// Closes the queue, waits for the writer and reports totals.
    pub fn finish(&self) -> Result<RecorderStats, RecordError> {
        self.shared.sender.lock().unwrap_or_else(|e| e.into_inner()).take();
        let handle = self.writer.lock().unwrap_or_else(|e| e.into_inner()).take();
        let written = match handle {
            Some(h) => h.join().map_err(|_| RecordError::Failed("trace writer panicked".into()))?,
            None => return Err(RecordError::Failed("recorder already finished".into())),
        };
        if self.shared.failed.load(Ordering::SeqCst) {
            let msg = self.shared.failure.lock().unwrap_or_else(|e| e.into_inner()).clone();
            return Err(RecordError::Failed(msg.unwrap_or_default()));
        }
        let seq = self.shared.seq.lock().unwrap_or_else(|e| e.into_inner());
        Ok(RecorderStats {
            events: seq.events,
            records: seq.records,
            lines_written: written,
            blocked_sends: self.shared.blocked.load(Ordering::Relaxed),
        })
    }
}

#[cfg(test)]
mod tests {
    use std::io;
    use std::time::Duration;

    use super::*;
    use crate::model::validate_events;
    use crate::wire::parse_trace;

    fn small(capacity: usize) -> RecorderConfig {
        RecorderConfig { queue_capacity: capacity, batch_size: 16, ..RecorderConfig::default() }
    }

    fn run(config: RecorderConfig, f: impl FnOnce(&Recorder)) -> (crate::wire::TraceLog, RecorderStats) {
        let mem = MemorySink::new();
        let rec = Recorder::new(config, mem.sink()).unwrap();
        f(&rec);
        let stats = rec.finish().unwrap();
        (parse_trace(&mem.contents()).unwrap(), stats)
    }

    #[test]
    fn habitat_construct_then_grow() {
        let (log, _) = run(RecorderConfig::default(), |r| {
            let args = vec![r.capture(&RuntimeValue::Text("42, 42".into())).unwrap()];
            let id = r
                .record_construct(
                    1,
                    "Habitat",
                    "Habitat",
                    args,
                    &[("coordinate".into(), RuntimeValue::Text("42, 42".into())), ("area".into(), RuntimeValue::Double(1.0))],
                )
                .unwrap();
            let call = r.record_method_start(id, "Habitat.grow", &[RuntimeValue::Int(42)]).unwrap();
            r.record_field_set(id, "area", &RuntimeValue::Double(1.0), &RuntimeValue::Double(2.0)).unwrap();
            r.record_method_end(call, false).unwrap();
        });
        let events = log.events();
        assert_eq!(events.len(), 4);
        match &events[0] {
            Event::ConstructEvent { args, initial_fields, .. } => {
                assert_eq!(args, &vec![CapturedValue::text("42, 42")]);
                assert_eq!(initial_fields["area"], CapturedValue::double(1.0));
            }
            other => panic!("{other:?}"),
        }
        match &events[2] {
            Event::FieldSetEvent { old_value, new_value, .. } => {
                assert_eq!(old_value, &CapturedValue::double(1.0));
                assert_eq!(new_value, &CapturedValue::double(2.0));
            }
            other => panic!("{other:?}"),
        }
        assert!(validate_events(&events).is_empty());
    }

    #[test]
    fn empty_construction_and_no_op_assignment() {
        let (log, _) = run(RecorderConfig::default(), |r| {
            let id = r.record_construct(9, "Empty", "Empty", vec![], &[]).unwrap();
            r.record_field_set(id, "x", &RuntimeValue::Int(1), &RuntimeValue::Int(1)).unwrap();
        });
        let events = log.events();
        assert!(matches!(&events[0], Event::ConstructEvent { args, initial_fields, .. } if args.is_empty() && initial_fields.is_empty()));
        assert_eq!(events.len(), 2);
    }

    #[test]
    fn contract_violations() {
        let mem = MemorySink::new();
        let r = Recorder::new(RecorderConfig::default(), mem.sink()).unwrap();
        r.record_construct(1, "A", "A", vec![], &[]).unwrap();
        assert!(matches!(r.record_construct(1, "A", "A", vec![], &[]), Err(RecordError::Contract(_))));
        assert!(matches!(r.record_method_end(77, false), Err(RecordError::Contract(_))));
        assert!(matches!(r.record_field_set(5, "x", &RuntimeValue::Null, &RuntimeValue::Null), Err(RecordError::Contract(_))));
        assert!(matches!(r.record_method_start(5, "A.m", &[]), Err(RecordError::Contract(_))));
        r.finish().unwrap();
    }

    #[test]
    fn recursion_pairs_by_call_id() {
        let (log, _) = run(RecorderConfig::default(), |r| {
            let id = r.record_construct(1, "Node", "Node", vec![], &[]).unwrap();
            let calls: Vec<u64> = (0..3).map(|_| r.record_method_start(id, "Node.walk", &[]).unwrap()).collect();
            for c in calls.iter().rev() {
                r.record_method_end(*c, false).unwrap();
            }
        });
        let events = log.events();
        assert!(validate_events(&events).is_empty());
        let starts: Vec<u64> = events
            .iter()
            .filter_map(|e| match e {
                Event::MethodStartEvent { call_id, .. } => Some(*call_id),
                _ => None,
            })
            .collect();
        let ends: Vec<u64> = events
            .iter()
            .filter_map(|e| match e {
                Event::MethodEndEvent { call_id, .. } => Some(*call_id),
                _ => None,
            })
            .collect();
        assert_eq!(starts, vec![1, 2, 3]);
        assert_eq!(ends, vec![3, 2, 1]);
    }

    #[test]
    fn sequence_truncation_and_object_refs() {
        let mem = MemorySink::new();
        let r = Recorder::new(RecorderConfig::default(), mem.sink()).unwrap();
        let seq = RuntimeValue::Sequence((0..100).map(RuntimeValue::Int).collect());
        match r.capture(&seq).unwrap() {
            CapturedValue::Sequence { elements, truncated } => {
                assert_eq!(elements.len(), 25);
                assert!(truncated);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(r.capture(&RuntimeValue::Null).unwrap(), CapturedValue::Null);
        let id = r.record_construct(3, "Habitat", "Habitat", vec![], &[]).unwrap();
        for _ in 0..16 {
            r.record_field_set(id, "area", &RuntimeValue::Double(1.0), &RuntimeValue::Double(1.0)).unwrap();
        }
        assert_eq!(r.now(), 17);
        assert_eq!(r.capture(&RuntimeValue::Object(3)).unwrap(), CapturedValue::object(id, 17));
        assert_eq!(r.capture(&RuntimeValue::Object(4)).unwrap(), CapturedValue::Opaque { type_name: String::new() });
        r.finish().unwrap();
    }

    #[test]
    fn depth_bound_applies_to_nested_sequences() {
        let config = RecorderConfig { max_depth: 2, ..RecorderConfig::default() };
        let mem = MemorySink::new();
        let r = Recorder::new(config, mem.sink()).unwrap();
        let nested = RuntimeValue::Sequence(vec![RuntimeValue::Sequence(vec![RuntimeValue::Sequence(vec![RuntimeValue::Int(1)])])]);
        assert!(r.capture(&nested).unwrap().is_truncated());
        r.finish().unwrap();
    }

    #[test]
    fn zero_events_leave_only_the_header() {
        let mem = MemorySink::new();
        let r = Recorder::new(RecorderConfig::default(), mem.sink()).unwrap();
        let stats = r.finish().unwrap();
        assert_eq!(stats.lines_written, 0);
        assert_eq!(mem.contents().lines().count(), 1);
    }

    #[test]
    fn ten_thousand_assignments_persist_in_order() {
        let (log, stats) = run(small(64), |r| {
            let id = r.record_construct(1, "C", "C", vec![], &[]).unwrap();
            for i in 0..10_000 {
                r.record_field_set(id, "n", &RuntimeValue::Int(i), &RuntimeValue::Int(i + 1)).unwrap();
            }
        });
        let events = log.events();
        assert_eq!(events.len(), 10_001);
        assert_eq!(stats.lines_written, 10_001);
        assert!(events.windows(2).all(|w| w[0].time() < w[1].time()));
    }

    #[test]
    fn one_million_events_through_the_default_queue() {
        let mem = MemorySink::new();
        let r = Recorder::new(RecorderConfig::default(), mem.sink()).unwrap();
        let id = r.record_construct(1, "C", "C", vec![], &[]).unwrap();
        for i in 0..999_999 {
            r.record_field_set(id, "n", &RuntimeValue::Int(i), &RuntimeValue::Int(i)).unwrap();
        }
        let stats = r.finish().unwrap();
        assert_eq!(stats.events, 1_000_000);
        assert_eq!(stats.lines_written, 1_000_000);
        let text = mem.contents();
        let mut last = 0u64;
        let mut count = 0;
        for line in text.lines().skip(1) {
            let t: u64 = line.split("\"time\":").nth(1).unwrap().split([',', '}']).next().unwrap().parse().unwrap();
            assert!(t > last);
            last = t;
            count += 1;
        }
        assert_eq!(count, 1_000_000);
    }

    /// A writer that sleeps on every batch so the queue fills up.
    struct Slow(MemorySink);

    impl Write for Slow {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            std::thread::sleep(Duration::from_micros(200));
            self.0.write(buf)
        }

        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn saturated_queue_blocks_producers_without_loss() {
        let mem = MemorySink::new();
        let config = RecorderConfig { queue_capacity: 8, batch_size: 4, ..RecorderConfig::default() };
        let r = Recorder::new(config, Sink::Writer(Box::new(Slow(mem.clone())))).unwrap();
        let id = r.record_construct(1, "C", "C", vec![], &[]).unwrap();
        for i in 0..2_000 {
            r.record_field_set(id, "n", &RuntimeValue::Int(i), &RuntimeValue::Int(i + 1)).unwrap();
        }
        let stats = r.finish().unwrap();
        assert!(stats.blocked_sends > 0);
        assert_eq!(parse_trace(&mem.contents()).unwrap().events().len(), 2_001);
    }

    #[test]
    fn concurrent_producers_get_distinct_ids_and_ordered_times() {
        let (log, stats) = run(small(128), |r| {
            std::thread::scope(|s| {
                for t in 0..4u64 {
                    let r = r.clone();
                    s.spawn(move || {
                        for i in 0..500u64 {
                            let id = r.record_construct(t * 1_000 + i, "P", "P", vec![], &[]).unwrap();
                            let c = r.record_method_start(id, "P.run", &[]).unwrap();
                            r.record_field_set(id, "x", &RuntimeValue::Int(0), &RuntimeValue::Int(1)).unwrap();
                            r.record_method_end(c, false).unwrap();
                        }
                    });
                }
            });
        });
        let events = log.events();
        assert_eq!(events.len(), 8_000);
        assert_eq!(stats.lines_written, 8_000);
        assert!(validate_events(&events).is_empty());
    }

    struct Failing;

    impl Write for Failing {
        fn write(&mut self, _: &[u8]) -> io::Result<usize> {
            Err(io::Error::other("disk full"))
        }

        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    /// Lets the header through, then fails every write.
    struct FailAfterHeader(bool);

    impl Write for FailAfterHeader {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            if self.0 {
                return Failing.write(buf);
            }
            self.0 = true;
            Ok(buf.len())
        }

        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn io_failure_puts_the_recorder_in_a_failed_state() {
        let r = Recorder::new(RecorderConfig { batch_size: 1, ..RecorderConfig::default() }, Sink::Writer(Box::new(FailAfterHeader(false)))).unwrap();
        r.record_construct(1, "A", "A", vec![], &[]).unwrap();
        let mut saw_failure = false;
        for i in 0..1_000 {
            std::thread::sleep(Duration::from_millis(1));
            if let Err(e) = r.record_construct(100 + i, "A", "A", vec![], &[]) {
                assert!(matches!(e, RecordError::Failed(_)));
                saw_failure = true;
                break;
            }
        }
        assert!(saw_failure);
        assert!(r.finish().is_err());
    }

    struct Fixture;

    impl ObjectInspector for Fixture {
        fn type_name(&self, identity: Identity) -> String {
            if identity == 1 { "Monkey".into() } else { "Habitat".into() }
        }

        fn fields(&self, identity: Identity) -> Vec<(String, RuntimeValue)> {
            if identity == 1 {
                vec![
                    ("age".into(), RuntimeValue::Int(1)),
                    ("eyeColor".into(), RuntimeValue::Enum { type_name: "EyeColor".into(), constant: "BROWN".into() }),
                    ("habitat".into(), RuntimeValue::Object(2)),
                ]
            } else {
                vec![("coordinate".into(), RuntimeValue::Text("42, 42".into())), ("area".into(), RuntimeValue::Double(2.0))]
            }
        }
    }

    #[test]
    fn serialization_embeds_plans_for_structure_based_types() {
        let cat = crate::analyzer::fixtures::zoo_catalog();
        let model = crate::analyzer::extract_type_model(&cat.declarations["Monkey"], &cat).unwrap();
        let plan = crate::synth::synthesize(&model, &crate::model::CostTable::default()).unwrap();
        let plans = BTreeMap::from([("Monkey".to_string(), plan)]);
        let (log, _) = run(RecorderConfig::default(), |r| {
            let h = r.record_construct(2, "Habitat", "Habitat", vec![], &[]).unwrap();
            let m = r.record_construct(1, "Monkey", "Monkey", vec![], &[]).unwrap();
            let rec = r
                .request_serialization("Zoo.admit", &RuntimeValue::Null, &[RuntimeValue::Object(1)], Some(&RuntimeValue::Int(3)), &Fixture, &plans)
                .unwrap();
            let key = ObjectRefKey { object_id: m, logical_time: 2 };
            assert_eq!(rec.args, vec![CapturedValue::object(m, 2)]);
            let inst = &rec.embedded_plans[&key];
            assert_eq!(inst.actions[0].arguments[2], CapturedValue::object(h, 2));
            assert_eq!(rec.unresolved_refs(), [ObjectRefKey { object_id: h, logical_time: 2 }].into());
        });
        assert_eq!(log.records().len(), 1);
    }

    #[test]
    fn minimal_record_without_arguments() {
        let (log, _) = run(RecorderConfig::default(), |r| {
            r.request_serialization("Geo.size", &RuntimeValue::Null, &[], Some(&RuntimeValue::Int(4)), &NoInspector, &BTreeMap::new())
                .unwrap();
        });
        let recs = log.records();
        assert_eq!(recs[0].return_value, Some(CapturedValue::int(4)));
        assert!(recs[0].args.is_empty());
    }
}

//! Class-balanced, confidence-gated FIFO memory of momentum-model outputs.
//!
//! Each class owns a ring buffer of capacity `L`. Unlabeled entries are
//! admitted only when their top probability reaches the gate `τ` and are
//! routed to their predicted class; labeled entries bypass the gate and are
//! routed to their ground-truth class. The full buffer evicts its oldest entry.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{param_err, Result};
use crate::model::{join_floats, LineReader};
use crate::numerics::{ClassDistribution, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntrySource {
    Unlabeled,
    Labeled,
}

impl EntrySource {
    pub fn as_str(self) -> &'static str {
        match self {
            EntrySource::Unlabeled => "unlabeled",
            EntrySource::Labeled => "labeled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "unlabeled" => Some(EntrySource::Unlabeled),
            "labeled" => Some(EntrySource::Labeled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry {
    pub feature: FeatureVector,
    pub distribution: ClassDistribution,
    pub source: EntrySource,
    pub step: u64,
}

impl QueueEntry {
    pub fn new(feature: FeatureVector, distribution: ClassDistribution, source: EntrySource, step: u64) -> Self {
        Self { feature, distribution, source, step }
    }
}

#[derive(Debug, Clone)]
pub struct ClassBalancedQueue {
    buffers: Vec<VecDeque<QueueEntry>>,
    capacity: usize,
    threshold: f64,
    store_labeled_onehot: bool,
}

impl ClassBalancedQueue {
    pub fn new(classes: usize, capacity: usize, threshold: f64) -> Result<Self> {
        if classes == 0 || capacity == 0 {
            return param_err("queue needs at least one class and positive capacity");
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return param_err(format!("queue gate must lie in (0, 1], got {threshold}"));
        }
        Ok(Self {
            buffers: (0..classes).map(|_| VecDeque::with_capacity(capacity)).collect(),
            capacity,
            threshold,
            store_labeled_onehot: false,
        })
    }

    /// Store the ground-truth one-hot for labeled entries instead of the
    /// momentum-model prediction.
    pub fn with_labeled_onehot(mut self, on: bool) -> Self {
        self.store_labeled_onehot = on;
        self
    }

    pub fn classes(&self) -> usize {
        self.buffers.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn class_entries(&self, class: usize) -> &VecDeque<QueueEntry> {
        &self.buffers[class]
    }

    pub fn len(&self) -> usize {
        self.buffers.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.iter().all(VecDeque::is_empty)
    }

    /// Entries per class.
    pub fn fill(&self) -> Vec<usize> {
        self.buffers.iter().map(VecDeque::len).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &QueueEntry)> {
        self.buffers.iter().enumerate().flat_map(|(c, b)| b.iter().map(move |e| (c, e)))
    }

    fn push(&mut self, class: usize, entry: QueueEntry) {
        let buf = &mut self.buffers[class];
        if buf.len() == self.capacity {
            buf.pop_front();
        }
        buf.push_back(entry);
    }

    /// Gated enqueue into the buffer of the predicted class. Returns whether
    /// the entry was admitted.
    pub fn enqueue_unlabeled(&mut self, entry: QueueEntry) -> bool {
        debug_assert_eq!(entry.source, EntrySource::Unlabeled);
        if entry.distribution.max_prob() < self.threshold {
            return false;
        }
        let class = entry.distribution.argmax();
        self.push(class, entry);
        true
    }

    /// Ungated enqueue into the buffer of `label`.
    pub fn enqueue_labeled(&mut self, mut entry: QueueEntry, label: usize) -> Result<()> {
        debug_assert_eq!(entry.source, EntrySource::Labeled);
        if label >= self.classes() {
            return param_err(format!("label {label} out of range for {} classes", self.classes()));
        }
        if self.store_labeled_onehot {
            entry.distribution = ClassDistribution::one_hot(label, self.classes())?;
        }
        self.push(label, entry);
        Ok(())
    }

    /// Reinserts an entry into a specific buffer without gating, used when
    /// restoring a checkpoint.
    pub(crate) fn restore(&mut self, class: usize, entry: QueueEntry) -> Result<()> {
        if class >= self.classes() {
            return param_err(format!("class {class} out of range"));
        }
        self.push(class, entry);
        Ok(())
    }

    /// Whether every class holds at least `subsets` entries.
    pub fn ready(&self, subsets: usize) -> bool {
        self.buffers.iter().all(|b| b.len() >= subsets)
    }

    /// Randomly splits each class into `subsets` equal, disjoint parts.
    ///
    /// A class with `n` entries contributes `n / subsets` entries to every
    /// part; the remaining `n % subsets` sit out this round.
    pub fn partition<R: Rng + ?Sized>(&self, subsets: usize, rng: &mut R) -> Result<QueuePartition<'_>> {
        if subsets == 0 {
            return param_err("partition needs at least one subset");
        }
        let mut parts: Vec<Vec<&QueueEntry>> = vec![Vec::new(); subsets];
        let mut order = Vec::new();
        for buf in &self.buffers {
            let per_subset = buf.len() / subsets;
            if per_subset == 0 {
                continue;
            }
            order.clear();
            order.extend(0..buf.len());
            order.shuffle(rng);
            for (m, chunk) in order.chunks_exact(per_subset).take(subsets).enumerate() {
                parts[m].extend(chunk.iter().map(|&i| &buf[i]));
            }
        }
        Ok(QueuePartition { subsets: parts })
    }

    /// CSV dump: `class,step,source,max_prob,p0..,f0..`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let Some((_, first)) = self.iter().next() else {
            writeln!(out, "class,step,source,max_prob")?;
            return Ok(());
        };
        let mut header = vec!["class".to_string(), "step".into(), "source".into(), "max_prob".into()];
        header.extend((0..first.distribution.classes()).map(|k| format!("p{k}")));
        header.extend((0..first.feature.dim()).map(|k| format!("f{k}")));
        writeln!(out, "{}", header.join(","))?;
        for (class, e) in self.iter() {
            let mut row = vec![class.to_string(), e.step.to_string(), e.source.as_str().to_string()];
            row.push(crate::fmt_float(e.distribution.max_prob()));
            row.extend(e.distribution.iter().map(|v| crate::fmt_float(*v)));
            row.extend(e.feature.iter().map(|v| crate::fmt_float(*v)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Exact text serialization of every buffer, oldest entry first.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{QUEUE_MAGIC}")?;
        writeln!(out, "queue {} {} {}", self.classes(), self.capacity, self.store_labeled_onehot as usize)?;
        writeln!(out, "{}", join_floats(&[self.threshold]))?;
        for (k, buf) in self.buffers.iter().enumerate() {
            writeln!(out, "class {k} {}", buf.len())?;
            for e in buf {
                let source = match e.source {
                    EntrySource::Unlabeled => 0,
                    EntrySource::Labeled => 1,
                };
                writeln!(out, "entry {} {source} {}", e.step, e.feature.dim())?;
                writeln!(out, "{}", join_floats(&e.distribution))?;
                writeln!(out, "{}", join_floats(&e.feature))?;
            }
        }
        writeln!(out, "end")?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: &mut R) -> Result<Self> {
        let mut lines = LineReader::new(input);
        let magic = lines.next_line()?;
        if magic != QUEUE_MAGIC {
            return Err(lines.error(format!("expected `{QUEUE_MAGIC}`, found `{magic}`")));
        }
        let header = lines.keyed_usizes("queue")?;
        let [classes, capacity, onehot] = header[..] else {
            return Err(lines.error("malformed queue header".into()));
        };
        let threshold = lines.floats(1)?[0];
        let mut queue = Self::new(classes, capacity, threshold)?.with_labeled_onehot(onehot == 1);
        for k in 0..classes {
            let class_header = lines.keyed_usizes("class")?;
            let [class, n] = class_header[..] else {
                return Err(lines.error("malformed class header".into()));
            };
            if class != k || n > capacity {
                return Err(lines.error(format!("unexpected class header {class_header:?}")));
            }
            for _ in 0..n {
                let entry = lines.keyed_usizes("entry")?;
                let [step, source, dim] = entry[..] else {
                    return Err(lines.error("malformed entry header".into()));
                };
                let source = match source {
                    0 => EntrySource::Unlabeled,
                    1 => EntrySource::Labeled,
                    s => return Err(lines.error(format!("unknown entry source {s}"))),
                };
                let distribution = ClassDistribution::new(lines.floats(classes)?)?;
                let feature = FeatureVector::new(lines.floats(dim)?)?;
                queue.restore(k, QueueEntry::new(feature, distribution, source, step as u64))?;
            }
        }
        let end = lines.next_line()?;
        if end != "end" {
            return Err(lines.error(format!("expected `end`, found `{end}`")));
        }
        Ok(queue)
    }
}

const QUEUE_MAGIC: &str = "AGGMATCH-QUEUE v1";

/// `M` disjoint views over a queue, each with the same count per class.
#[derive(Debug, Clone)]
pub struct QueuePartition<'a> {
    subsets: Vec<Vec<&'a QueueEntry>>,
}

impl<'a> QueuePartition<'a> {
    /// A partition built from explicit subsets.
    pub fn from_subsets(subsets: Vec<Vec<&'a QueueEntry>>) -> Self {
        Self { subsets }
    }

    pub fn subsets(&self) -> &[Vec<&'a QueueEntry>] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let mut q = ClassBalancedQueue::new(3, 4, 0.7).unwrap().with_labeled_onehot(true);
        for step in 0..9u64 {
            let p = ClassDistribution::from_weights(vec![1.0 + step as f64, 0.3, 0.1 * step as f64]).unwrap();
            let f = FeatureVector::new(vec![step as f64 / 3.0, -0.1]).unwrap();
            q.enqueue_unlabeled(QueueEntry::new(f.clone(), p.clone(), EntrySource::Unlabeled, step));
            q.enqueue_labeled(QueueEntry::new(f, p, EntrySource::Labeled, step), (step % 3) as usize).unwrap();
        }
        let mut buf = Vec::new();
        q.write_to(&mut buf).unwrap();
        let back = ClassBalancedQueue::read_from(&mut buf.as_slice()).unwrap();
        let a: Vec<_> = q.iter().collect();
        let b: Vec<_> = back.iter().collect();
        assert_eq!(a, b);
        assert_eq!((back.capacity(), back.threshold()), (4, 0.7));
        assert!(ClassBalancedQueue::read_from(&mut &b"nope\n"[..]).is_err());
    }
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn entry(probs: &[f64], step: u64, source: EntrySource) -> QueueEntry {
        QueueEntry::new(
            FeatureVector::new(vec![step as f64, 1.0]).unwrap(),
            ClassDistribution::new(probs.to_vec()).unwrap(),
            source,
            step,
        )
    }

    fn unl(probs: &[f64], step: u64) -> QueueEntry {
        entry(probs, step, EntrySource::Unlabeled)
    }

    #[test]
    fn gate_is_inclusive() {
        let mut q = ClassBalancedQueue::new(2, 4, 0.95).unwrap();
        assert!(q.enqueue_unlabeled(unl(&[0.04, 0.96], 0)));
        assert!(!q.enqueue_unlabeled(unl(&[0.94, 0.06], 1)));
        assert!(q.enqueue_unlabeled(unl(&[0.95, 0.05], 2)));
        assert_eq!(q.fill(), vec![1, 1]);
    }

    #[test]
    fn fifo_eviction_keeps_latest() {
        let mut q = ClassBalancedQueue::new(2, 4, 0.5).unwrap();
        for step in 0..5 {
            assert!(q.enqueue_unlabeled(unl(&[1.0, 0.0], step)));
        }
        let steps: Vec<u64> = q.class_entries(0).iter().map(|e| e.step).collect();
        assert_eq!(steps, vec![1, 2, 3, 4]);
        assert!(q.class_entries(1).is_empty());
    }

    #[test]
    fn labeled_entries_skip_gate_and_use_true_class() {
        let mut q = ClassBalancedQueue::new(4, 4, 0.95).unwrap();
        q.enqueue_labeled(entry(&[0.4, 0.3, 0.2, 0.1], 0, EntrySource::Labeled), 3).unwrap();
        assert_eq!(q.fill(), vec![0, 0, 0, 1]);
        assert_eq!(q.class_entries(3)[0].distribution.probs(), &[0.4, 0.3, 0.2, 0.1]);
        assert!(q.enqueue_labeled(entry(&[0.25; 4], 0, EntrySource::Labeled), 4).is_err());

        let mut onehot = ClassBalancedQueue::new(4, 4, 0.95).unwrap().with_labeled_onehot(true);
        onehot.enqueue_labeled(entry(&[0.4, 0.3, 0.2, 0.1], 0, EntrySource::Labeled), 3).unwrap();
        assert_eq!(onehot.class_entries(3)[0].distribution.probs(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn ready_examples() {
        let mut q = ClassBalancedQueue::new(2, 4, 0.5).unwrap();
        assert!(!q.ready(2));
        for s in 0..4 {
            q.enqueue_unlabeled(unl(&[1.0, 0.0], s));
            q.enqueue_unlabeled(unl(&[0.0, 1.0], s));
        }
        assert!(q.ready(4));
        let mut short = ClassBalancedQueue::new(2, 4, 0.5).unwrap();
        for s in 0..4 {
            short.enqueue_unlabeled(unl(&[1.0, 0.0], s));
        }
        for s in 0..3 {
            short.enqueue_unlabeled(unl(&[0.0, 1.0], s));
        }
        assert!(!short.ready(4));
    }

    fn filled(counts: &[usize]) -> ClassBalancedQueue {
        let classes = counts.len();
        let mut q = ClassBalancedQueue::new(classes, 64, 0.5).unwrap();
        let mut step = 0;
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                let mut p = vec![0.0; classes];
                p[c] = 1.0;
                q.enqueue_unlabeled(unl(&p, step));
                step += 1;
            }
        }
        q
    }

    #[test]
    fn partition_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = filled(&[8, 8]);
        let p = q.partition(4, &mut rng).unwrap();
        assert_eq!(p.len(), 4);
        for s in p.subsets() {
            assert_eq!(s.len(), 4);
            assert_eq!(s.iter().filter(|e| e.distribution.argmax() == 0).count(), 2);
        }
        let single = q.partition(1, &mut rng).unwrap();
        assert_eq!(single.subsets()[0].len(), 16);

        let odd = filled(&[7, 8]);
        let p = odd.partition(4, &mut rng).unwrap();
        for s in p.subsets() {
            assert_eq!(s.iter().filter(|e| e.distribution.argmax() == 0).count(), 1);
        }
        assert!(q.partition(0, &mut rng).is_err());
    }

    #[test]
    fn csv_dump_has_one_row_per_entry() {
        let q = filled(&[3, 2]);
        let mut out = Vec::new();
        q.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "class,step,source,max_prob,p0,p1,f0,f1");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("0,0,unlabeled,"));
    }

    proptest! {
        #[test]
        fn capacity_fifo_and_gate_hold(
            ops in prop::collection::vec((0usize..3, 0.0f64..1.0, any::<bool>()), 0..200),
            cap in 1usize..8,
        ) {
            let tau = 0.6;
            let mut q = ClassBalancedQueue::new(3, cap, tau).unwrap();
            for (step, (class, conf, labeled)) in ops.into_iter().enumerate() {
                let mut p = vec![(1.0 - conf) / 2.0; 3];
                p[class] = conf;
                let probs = ClassDistribution::from_weights(p).unwrap().into_vec();
                if labeled {
                    q.enqueue_labeled(entry(&probs, step as u64, EntrySource::Labeled), class).unwrap();
                } else {
                    let admitted = q.enqueue_unlabeled(unl(&probs, step as u64));
                    let max = probs.iter().copied().fold(0.0, f64::max);
                    prop_assert_eq!(admitted, max >= tau);
                }
            }
            for c in 0..3 {
                let buf = q.class_entries(c);
                prop_assert!(buf.len() <= cap);
                let steps: Vec<u64> = buf.iter().map(|e| e.step).collect();
                prop_assert!(steps.windows(2).all(|w| w[0] < w[1]));
                for e in buf {
                    if e.source == EntrySource::Unlabeled {
                        prop_assert!(e.distribution.max_prob() >= tau);
                    }
                }
            }
        }

        #[test]
        fn partition_disjoint_even_reproducible(
            counts in prop::collection::vec(0usize..40, 1..5),
            m in 1usize..9,
            seed in any::<u64>(),
        ) {
            let q = filled(&counts);
            let a = q.partition(m, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = q.partition(m, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let mut seen = HashSet::new();
            for (sa, sb) in a.subsets().iter().zip(b.subsets()) {
                let steps_a: Vec<u64> = sa.iter().map(|e| e.step).collect();
                let steps_b: Vec<u64> = sb.iter().map(|e| e.step).collect();
                prop_assert_eq!(&steps_a, &steps_b);
                for s in steps_a {
                    prop_assert!(seen.insert(s), "entry used twice");
                }
                for (c, &n) in counts.iter().enumerate() {
                    let in_class = sa.iter().filter(|e| e.distribution.argmax() == c).count();
                    prop_assert_eq!(in_class, n / m);
                }
            }
            let expected: usize = counts.iter().map(|n| n / m * m).sum();
            prop_assert_eq!(seen.len(), expected);
        }
    }
}

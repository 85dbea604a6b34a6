//! Small checked programs shared by the integration tests and the
//! acceptance runner. Every explicit `pass` a program issues goes through
//! [`Passes::pass`] so that it can be counted.

#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use som::sync::{Channel, Lock, LockKind, Queue, RwLock};
use som::{EntityId, Mode, ProcessId, ResourceId, Session, Statement};

#[derive(Default)]
pub struct Passes(AtomicUsize);

impl Passes {
    pub fn pass(&self, s: &Session, actor: ProcessId, r: ResourceId, from: EntityId, to: EntityId) {
        self.0.fetch_add(1, Ordering::Relaxed);
        let _ = s.check(actor, Statement::Pass { resource: r, from, to });
    }

    pub fn count(&self) -> usize {
        self.0.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub violations: usize,
    pub explicit_passes: usize,
    pub report: String,
}

fn finish(s: &Session, passes: &Passes) -> Run {
    Run { violations: s.violation_count(), explicit_passes: passes.count(), report: s.report() }
}

// ---------------------------------------------------------------------------
// Misuse of the synchronization mechanisms

pub const MISUSES: [&str; 6] = [
    "send-unowned",
    "write-without-lock",
    "unlock-without-ownership",
    "read-after-send",
    "access-after-queue-add",
    "write-under-read-lock",
];

pub fn misuse(name: &str, mode: Mode) -> Run {
    let s = Session::new(mode);
    let main = s.root();
    match name {
        "send-unowned" => {
            let other = s.spawn(main).unwrap();
            let ch = Channel::new(&s, main, 1).unwrap();
            let o = s.on_allocate(main);
            let _ = ch.send(&s, other, o);
        }
        "write-without-lock" => {
            let o = s.on_allocate(main);
            let _lock = Lock::new(&s, main, o, LockKind::Monitor).unwrap();
            let _ = s.on_field_write(main, o);
        }
        "unlock-without-ownership" => {
            let o = s.on_allocate(main);
            let lock = Lock::new(&s, main, o, LockKind::BinarySemaphore).unwrap();
            let other = s.spawn(main).unwrap();
            lock.lock(&s, other);
            let _ = lock.unlock(&s, main);
        }
        "read-after-send" => {
            let ch = Channel::new(&s, main, 1).unwrap();
            let o = s.on_allocate(main);
            let _ = ch.send(&s, main, o);
            let _ = s.on_field_read(main, o);
        }
        "access-after-queue-add" => {
            let q = Queue::new(&s, main).unwrap();
            let o = s.on_allocate(main);
            let _ = q.add(&s, main, o);
            let _ = s.on_field_write(main, o);
        }
        "write-under-read-lock" => {
            let o = s.on_allocate(main);
            let rw = RwLock::new(&s, main, o).unwrap();
            rw.lock_read(&s, main);
            let _ = s.on_field_read(main, o);
            let _ = s.on_field_write(main, o);
            let _ = rw.unlock_read(&s, main);
        }
        _ => panic!("unknown misuse {name}"),
    }
    finish(&s, &Passes::default())
}

// ---------------------------------------------------------------------------
// First receiver owns

/// A factory method allocates and initializes an object; the caller stores
/// it into a container it solely roots.
pub fn factory(mode: Mode) -> (Run, bool) {
    let s = Session::new(mode);
    let main = s.root();
    let make = || {
        let o = s.on_allocate(main);
        let _ = s.on_field_write(main, o);
        o
    };
    let container = s.on_allocate(main);
    let mut owned = true;
    for _ in 0..4 {
        let o = make();
        let _ = s.on_field_assign(main, container, o);
        let _ = s.on_field_read(main, o);
        if mode != Mode::None {
            owned &= s.graph().owners(o) == Some(&[container.into()][..]);
        }
    }
    (finish(&s, &Passes::default()), owned)
}

/// Two threads bounce a ball guarded by two binary semaphores.
pub fn pingpong(mode: Mode, rounds: usize) -> Run {
    let s = Arc::new(Session::new(mode));
    let main = s.root();
    let ball = s.on_allocate(main);
    let ping = Arc::new(Lock::new(&s, main, ball, LockKind::BinarySemaphore).unwrap());
    ping.lock(&s, main);
    let pong = Arc::new(Lock::new(&s, main, ball, LockKind::BinarySemaphore).unwrap());
    let player = |mine: Arc<Lock>, theirs: Arc<Lock>| {
        let s = s.clone();
        let me = s.spawn(main).unwrap();
        thread::spawn(move || {
            for _ in 0..rounds {
                mine.lock(&s, me);
                let _ = s.on_field_read(me, ball);
                let _ = s.on_field_write(me, ball);
                let _ = theirs.unlock(&s, me);
            }
        })
    };
    let a = player(ping.clone(), pong.clone());
    let b = player(pong, ping);
    a.join().unwrap();
    b.join().unwrap();
    finish(&s, &Passes::default())
}

/// In-place quicksort over an array object whose elements it owns.
pub fn quicksort(mode: Mode, keys: &[i64]) -> (Run, bool) {
    let s = Session::new(mode);
    let main = s.root();
    let array = s.on_allocate(main);
    let mut a: Vec<(ResourceId, i64)> = keys
        .iter()
        .map(|&k| {
            let e = s.on_allocate(main);
            let _ = s.on_field_write(main, e);
            let _ = s.on_field_assign(main, array, e);
            (e, k)
        })
        .collect();
    let key = |a: &[(ResourceId, i64)], i: usize| {
        let _ = s.on_field_read(main, array);
        let _ = s.on_field_read(main, a[i].0);
        a[i].1
    };
    let mut stack = vec![(0, a.len())];
    while let Some((lo, hi)) = stack.pop() {
        if hi - lo < 2 {
            continue;
        }
        let pivot = key(&a, hi - 1);
        let mut store = lo;
        for i in lo..hi - 1 {
            if key(&a, i) < pivot {
                let _ = s.on_field_write(main, array);
                a.swap(i, store);
                store += 1;
            }
        }
        let _ = s.on_field_write(main, array);
        a.swap(store, hi - 1);
        stack.push((lo, store));
        stack.push((store + 1, hi));
    }
    let sorted = a.windows(2).all(|w| w[0].1 <= w[1].1);
    (finish(&s, &Passes::default()), sorted)
}

/// A singly linked list whose nodes are all owned directly by the list.
pub struct LinkedList {
    pub id: ResourceId,
    pub nodes: Vec<ResourceId>,
}

impl LinkedList {
    pub fn new(s: &Session, actor: ProcessId, len: usize) -> Self {
        let id = s.on_allocate(actor);
        let mut nodes = Vec::new();
        for _ in 0..len {
            let n = s.on_allocate(actor);
            let _ = s.on_field_write(actor, n);
            // `first = n` or `last.next = n`: the list is the first receiver.
            let _ = s.on_field_assign(actor, id, n);
            if let Some(&last) = nodes.last() {
                let _ = s.on_field_write(actor, last);
            }
            nodes.push(n);
        }
        Self { id, nodes }
    }

    /// Moves the first `index` nodes into a new list.
    pub fn split_before(&mut self, s: &Session, actor: ProcessId, index: usize, passes: &Passes) -> LinkedList {
        let result = s.on_allocate(actor);
        let moved: Vec<ResourceId> = self.nodes.drain(..index).collect();
        let _ = s.on_field_assign(actor, result, moved[0]);
        passes.pass(s, actor, moved[0], self.id.into(), result.into());
        for &cur in &moved[1..] {
            let _ = s.on_field_read(actor, cur);
            passes.pass(s, actor, cur, self.id.into(), result.into());
        }
        let _ = s.on_field_write(actor, self.id);
        let _ = s.on_field_write(actor, *moved.last().unwrap());
        LinkedList { id: result, nodes: moved }
    }
}

/// Builds a list, hands it to a worker thread and splits it there. With
/// `race`, a second thread tries the same split without owning the list.
pub fn llsplit(mode: Mode, len: usize, index: usize, race: bool) -> Run {
    let s = Arc::new(Session::new(mode));
    let passes = Arc::new(Passes::default());
    let main = s.root();
    let thread_obj = s.on_allocate(main);
    let list = LinkedList::new(&s, main, len);
    let _ = s.on_field_assign(main, thread_obj, list.id);
    let worker = s.on_thread_start(main, thread_obj).unwrap();
    let list = Arc::new(Mutex::new(list));
    let spawn_split = |actor: ProcessId| {
        let (s, passes, list) = (s.clone(), passes.clone(), list.clone());
        thread::spawn(move || list.lock().unwrap().split_before(&s, actor, index, &passes).nodes.len())
    };
    assert_eq!(spawn_split(worker).join().unwrap(), index);
    if race {
        let intruder_obj = s.on_allocate(main);
        let intruder = s.on_thread_start(main, intruder_obj).unwrap();
        assert_eq!(spawn_split(intruder).join().unwrap(), index);
    }
    finish(&s, &passes)
}

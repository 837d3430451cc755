//! Randomizable buffer-custody traces over a model pair.
//!
//! A trace interleaves wire traffic, device steps, batched receive and
//! transmit, and explicit returns. Legal operations must never be reported
//! as misuse; forged replays of returned handles and returns to the wrong
//! pool must always be. After every operation the buffers are counted:
//! free in a pool, sitting in an rx ring, held by the application, or in a
//! tx ring, which must add up to the pools' capacity.

use nicdrv::memory::{BufferToken, FreeError};
use nicdrv::{
    DriverConfig, IxgbeDevice, Mempool, ModelConfig, ModelSystem, NetDevice, PacketBuffer, Platform,
};
use nicdrv_apps::frame::FrameBuilder;

use crate::BenchError;

pub const TRACE_RING: usize = 64;
pub const TRACE_BATCH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CustodyOp {
    Inject {
        port: u8,
        n: u8,
    },
    Step {
        budget: u8,
    },
    Rx {
        port: u8,
        max: u8,
    },
    Tx {
        port: u8,
        n: u8,
    },
    /// Return a held buffer to its own pool.
    Free {
        i: u8,
    },
    /// Let a held buffer go out of scope.
    Drop {
        i: u8,
    },
    /// Return a held buffer to the other port's pool. Illegal.
    FreeWrongPool {
        i: u8,
    },
    /// Forge a handle for a buffer returned earlier and return it. Illegal.
    Replay {
        i: u8,
    },
}

impl CustodyOp {
    pub fn is_legal(&self) -> bool {
        !matches!(self, CustodyOp::FreeWrongPool { .. } | CustodyOp::Replay { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceOutcome {
    pub ops: usize,
    /// Conservation checks that failed, as `(op index, counted, capacity)`.
    pub conservation_failures: Vec<(usize, usize, usize)>,
    /// Errors returned for legal operations.
    pub legal_errors: Vec<String>,
    pub illegal_attempts: u64,
    pub illegal_detected: u64,
    /// Replays among `illegal_detected`; the pools count these themselves.
    pub replays_detected: u64,
    /// Sum of the pools' own violation counters at the end.
    pub pool_violations: u64,
}

impl TraceOutcome {
    pub fn clean(&self) -> bool {
        self.conservation_failures.is_empty()
            && self.legal_errors.is_empty()
            && self.illegal_attempts == self.illegal_detected
            && self.pool_violations == self.replays_detected
    }
}

struct Rig {
    _sys: ModelSystem,
    nics: [nicdrv::ModelNic; 2],
    devs: [IxgbeDevice; 2],
    builder: FrameBuilder,
    seq: u64,
    held: Vec<PacketBuffer>,
    returned: Vec<(usize, BufferToken)>,
}

impl Rig {
    fn new() -> Result<Self, BenchError> {
        let sys = ModelSystem::new(
            2,
            ModelConfig {
                access_log: false,
                capture: false,
                ..ModelConfig::default()
            },
        );
        let platform = Platform::with_models(sys.clone());
        let cfg = DriverConfig {
            ring_size: TRACE_RING,
            max_batch: TRACE_BATCH,
            ..DriverConfig::default()
        };
        let a = IxgbeDevice::init(&platform.open_device("model:0")?, cfg.clone())?;
        let b = IxgbeDevice::init(&platform.open_device("model:1")?, cfg)?;
        Ok(Self {
            nics: [sys.nics()[0].clone(), sys.nics()[1].clone()],
            _sys: sys,
            devs: [a, b],
            builder: FrameBuilder::new(64, 2048, 0)?,
            seq: 0,
            held: Vec::new(),
            returned: Vec::new(),
        })
    }

    fn pool(&self, port: usize) -> &Mempool {
        self.devs[port].rx_pool(0).expect("queue 0")
    }

    fn port_of(&self, buf: &PacketBuffer) -> usize {
        if buf.belongs_to(self.pool(0)) {
            0
        } else {
            1
        }
    }

    fn counted(&self) -> (usize, usize) {
        let mut n = self.held.len();
        let mut cap = 0;
        for p in 0..2 {
            n += self.pool(p).free_count() + self.devs[p].rx_ring_buffers(0) + self.devs[p].tx_in_flight(0);
            cap += self.pool(p).capacity();
        }
        (n, cap)
    }

    fn take(&mut self, i: u8) -> Option<PacketBuffer> {
        if self.held.is_empty() {
            return None;
        }
        let k = i as usize % self.held.len();
        Some(self.held.remove(k))
    }

    fn apply(&mut self, op: CustodyOp, out: &mut TraceOutcome) {
        match op {
            CustodyOp::Inject { port, n } => {
                let nic = &self.nics[port as usize % 2];
                for _ in 0..n % 32 {
                    let f = self.builder.build(self.seq, 0);
                    self.seq += 1;
                    if let Err(e) = nic.inject(&f) {
                        out.legal_errors.push(format!("inject: {e}"));
                    }
                }
            }
            CustodyOp::Step { budget } => {
                for nic in &self.nics {
                    nic.step(budget as usize);
                }
            }
            CustodyOp::Rx { port, max } => {
                let max = max as usize % (TRACE_BATCH * 2);
                if let Err(e) = self.devs[port as usize % 2].rx_batch(0, &mut self.held, max) {
                    out.legal_errors.push(format!("rx: {e}"));
                }
            }
            CustodyOp::Tx { port, n } => {
                let n = (n as usize % (TRACE_BATCH + 1)).min(self.held.len());
                let mut batch: Vec<_> = self.held.drain(..n).collect();
                match self.devs[port as usize % 2].tx_batch(0, &mut batch) {
                    Ok(_) => self.held.extend(batch),
                    Err(e) => out.legal_errors.push(format!("tx: {e}")),
                }
            }
            CustodyOp::Free { i } => {
                if let Some(b) = self.take(i) {
                    let p = self.port_of(&b);
                    let t = b.token();
                    match self.pool(p).free(b) {
                        Ok(()) => self.returned.push((p, t)),
                        Err(e) => out.legal_errors.push(format!("free: {e}")),
                    }
                }
            }
            CustodyOp::Drop { i } => {
                if let Some(b) = self.take(i) {
                    let p = self.port_of(&b);
                    self.returned.push((p, b.token()));
                }
            }
            CustodyOp::FreeWrongPool { i } => {
                if let Some(b) = self.take(i) {
                    let own = self.port_of(&b);
                    let t = b.token();
                    out.illegal_attempts += 1;
                    // Rejected, then dropped back into its own pool.
                    if let Err(FreeError::PoolMismatch { .. }) = self.pool(1 - own).free(b) {
                        out.illegal_detected += 1;
                    }
                    self.returned.push((own, t));
                }
            }
            CustodyOp::Replay { i } => {
                if self.returned.is_empty() {
                    return;
                }
                let (p, t) = self.returned[i as usize % self.returned.len()];
                out.illegal_attempts += 1;
                let pool = self.pool(p);
                if let Err(FreeError::DoubleFree { .. } | FreeError::StaleHandle { .. }) =
                    pool.free(pool.forge(t))
                {
                    out.illegal_detected += 1;
                    out.replays_detected += 1;
                }
            }
        }
    }
}

/// Runs `ops` on a fresh model pair and reports what happened.
pub fn run_trace(ops: &[CustodyOp]) -> Result<TraceOutcome, BenchError> {
    let mut rig = Rig::new()?;
    let before = rig.pool(0).violations() + rig.pool(1).violations();
    let mut out = TraceOutcome::default();
    for (k, &op) in ops.iter().enumerate() {
        rig.apply(op, &mut out);
        out.ops += 1;
        let (n, cap) = rig.counted();
        if n != cap {
            out.conservation_failures.push((k, n, cap));
        }
    }
    out.pool_violations = rig.pool(0).violations() + rig.pool(1).violations() - before;
    Ok(out)
}

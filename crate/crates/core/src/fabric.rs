//! Simulated CU/DU decentralized baseband fabric.
//!
//! Each [`DistributedUnit`] owns one antenna cluster's `(H_c, y_c)` and only
//! ever touches that data. The CU talks to the DUs exclusively through
//! [`Fabric::broadcast`] and the `aggregate_*` methods, which charge a
//! [`MessageLedger`] per link, direction and payload class.
//!
//! Link numbering: in the star topology link `c` joins DU `c` to the CU. In
//! the daisy chain, link `c < C-1` joins DU `c` to DU `c+1` and link `C-1`
//! joins the last DU to the CU. DUs are 0-based in code.

use std::fmt;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::channel::{ClusterView, ClusteredChannel};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::modem::Constellation;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    #[default]
    Star,
    DaisyChain,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::Star => "star",
            TopologyKind::DaisyChain => "daisy-chain",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    pub kind: TopologyKind,
    pub units: usize,
}

/// Endpoint of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Cu,
    Du(usize),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Cu => f.write_str("cu"),
            Node::Du(c) => write!(f, "du{c}"),
        }
    }
}

impl Topology {
    pub fn new(kind: TopologyKind, units: usize) -> Result<Self> {
        if units == 0 {
            return Err(Error::config("a fabric needs at least one DU"));
        }
        Ok(Self { kind, units })
    }

    /// Endpoints of every link, `(far end, CU-side end)`.
    pub fn links(&self) -> Vec<(Node, Node)> {
        (0..self.units)
            .map(|c| match self.kind {
                TopologyKind::Star => (Node::Du(c), Node::Cu),
                TopologyKind::DaisyChain if c + 1 == self.units => (Node::Du(c), Node::Cu),
                TopologyKind::DaisyChain => (Node::Du(c), Node::Du(c + 1)),
            })
            .collect()
    }

    pub fn link_name(&self, link: usize) -> String {
        let (a, b) = self.links()[link];
        format!("{a}-{b}")
    }

    /// Links carrying one message when reaching (or collecting from) `units`.
    /// Star: each unit's own link. Chain: the path from the lowest-indexed
    /// unit up to the CU.
    pub fn links_touching(&self, units: &[usize]) -> Vec<usize> {
        match self.kind {
            TopologyKind::Star => {
                let mut v = units.to_vec();
                v.sort_unstable();
                v.dedup();
                v
            }
            TopologyKind::DaisyChain => match units.iter().min() {
                Some(&lo) => (lo..self.units).collect(),
                None => Vec::new(),
            },
        }
    }

    /// Links incident to the CU.
    pub fn cu_links(&self) -> Vec<usize> {
        match self.kind {
            TopologyKind::Star => (0..self.units).collect(),
            TopologyKind::DaisyChain => vec![self.units - 1],
        }
    }

    /// Sequential hops for one exchange with `units`.
    pub fn hops(&self, units: &[usize]) -> u64 {
        match self.kind {
            TopologyKind::Star => u64::from(!units.is_empty()),
            TopologyKind::DaisyChain => self.links_touching(units).len() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Toward the CU.
    Up,
    /// Away from the CU.
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadClass {
    /// Real/imaginary parts of continuous quantities, ω bits each.
    Continuous,
    /// QAM symbols, log2 M bits each.
    Qam,
    /// Scalar uploads (objective values, Gram diagonals), ω bits each.
    Scalar,
}

impl PayloadClass {
    const ALL: [PayloadClass; 3] = [PayloadClass::Continuous, PayloadClass::Qam, PayloadClass::Scalar];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PayloadClass::Continuous => "continuous",
            PayloadClass::Qam => "qam",
            PayloadClass::Scalar => "scalar",
        }
    }
}

/// Per-link, per-direction, per-class value counters.
///
/// Counters are atomic so concurrent DU workers may charge the same ledger.
#[derive(Debug)]
pub struct MessageLedger {
    topology: Topology,
    omega: u64,
    qam_bits: u64,
    counts: Vec<AtomicU64>,
    hops: AtomicU64,
}

/// One ledger CSV row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerRow {
    pub link: String,
    pub direction: &'static str,
    pub class: &'static str,
    pub bits: u64,
}

impl MessageLedger {
    pub fn new(topology: Topology, omega: u32, qam_order: usize) -> Self {
        let counts = (0..topology.units * 2 * 3).map(|_| AtomicU64::new(0)).collect();
        Self {
            topology,
            omega: omega as u64,
            qam_bits: qam_order.trailing_zeros() as u64,
            counts,
            hops: AtomicU64::new(0),
        }
    }

    #[inline]
    fn index(link: usize, dir: Direction, class: PayloadClass) -> usize {
        (link * 2 + dir as usize) * 3 + class.slot()
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    #[inline]
    pub fn width(&self, class: PayloadClass) -> u64 {
        match class {
            PayloadClass::Qam => self.qam_bits,
            PayloadClass::Continuous | PayloadClass::Scalar => self.omega,
        }
    }

    /// Records `values` payload values crossing `link` in direction `dir`.
    pub fn charge(&self, link: usize, dir: Direction, class: PayloadClass, values: u64) {
        self.counts[Self::index(link, dir, class)].fetch_add(values, Ordering::Relaxed);
    }

    pub fn add_hops(&self, hops: u64) {
        self.hops.fetch_add(hops, Ordering::Relaxed);
    }

    /// Sequential link traversals so far (parallel star exchanges count once).
    pub fn hops(&self) -> u64 {
        self.hops.load(Ordering::Relaxed)
    }

    pub fn values(&self, link: usize, dir: Direction, class: PayloadClass) -> u64 {
        self.counts[Self::index(link, dir, class)].load(Ordering::Relaxed)
    }

    pub fn bits(&self, link: usize, dir: Direction, class: PayloadClass) -> u64 {
        self.values(link, dir, class) * self.width(class)
    }

    pub fn link_bits(&self, link: usize) -> u64 {
        let mut s = 0;
        for dir in [Direction::Up, Direction::Down] {
            for class in PayloadClass::ALL {
                s += self.bits(link, dir, class);
            }
        }
        s
    }

    pub fn total_bits(&self) -> u64 {
        (0..self.topology.units).map(|l| self.link_bits(l)).sum()
    }

    /// Bits on links incident to the CU: the interconnection bandwidth.
    pub fn cu_bits(&self) -> u64 {
        self.topology.cu_links().into_iter().map(|l| self.link_bits(l)).sum()
    }

    pub fn rows(&self) -> Vec<LedgerRow> {
        let mut rows = Vec::new();
        for link in 0..self.topology.units {
            let name = self.topology.link_name(link);
            for (dir, dname) in [(Direction::Up, "up"), (Direction::Down, "down")] {
                for class in PayloadClass::ALL {
                    rows.push(LedgerRow {
                        link: name.clone(),
                        direction: dname,
                        class: class.name(),
                        bits: self.bits(link, dir, class),
                    });
                }
            }
        }
        rows
    }

    /// CSV with header `link,direction,class,bits`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in self.rows() {
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Preprocessing,
    Gradient,
    Sampling,
}

/// Real-multiplication counters, per DU and at the CU, split by phase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub du: Vec<[u64; 3]>,
    pub cu: [u64; 3],
}

impl OpCounters {
    pub fn new(units: usize) -> Self {
        Self {
            du: vec![[0; 3]; units],
            cu: [0; 3],
        }
    }

    #[inline]
    pub fn add_du(&mut self, c: usize, phase: Phase, n: u64) {
        self.du[c][phase as usize] += n;
    }

    #[inline]
    pub fn add_cu(&mut self, phase: Phase, n: u64) {
        self.cu[phase as usize] += n;
    }

    pub fn du_total(&self, c: usize) -> u64 {
        self.du[c].iter().sum()
    }

    /// Mean over DUs of one phase.
    pub fn du_mean(&self, phase: Phase) -> f64 {
        let s: u64 = self.du.iter().map(|d| d[phase as usize]).sum();
        s as f64 / self.du.len().max(1) as f64
    }

    pub fn du_mean_total(&self) -> f64 {
        let s: u64 = (0..self.du.len()).map(|c| self.du_total(c)).sum();
        s as f64 / self.du.len().max(1) as f64
    }

    pub fn du_max_total(&self) -> u64 {
        (0..self.du.len()).map(|c| self.du_total(c)).max().unwrap_or(0)
    }

    pub fn cu_total(&self) -> u64 {
        self.cu.iter().sum()
    }

    pub fn merge(&mut self, other: &OpCounters) {
        if self.du.len() < other.du.len() {
            self.du.resize(other.du.len(), [0; 3]);
        }
        for (a, b) in self.du.iter_mut().zip(&other.du) {
            for p in 0..3 {
                a[p] += b[p];
            }
        }
        for p in 0..3 {
            self.cu[p] += other.cu[p];
        }
    }
}

/// Which stored item a DU read, for locality instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    /// DU performing the computation.
    pub unit: usize,
    /// DU whose storage was read.
    pub owner: usize,
}

/// Products `h_u · level_l` for every user column and per-axis level, so
/// that `H x` for a lattice point needs additions only.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable<T> {
    rows: usize,
    side: usize,
    /// Laid out as `[(u * L + l) * rows + b]`.
    products: Vec<Complex<T>>,
}

impl<T: Real> SymbolTable<T> {
    pub fn build(h: &CMatrix<T>, constellation: &Constellation<T>) -> Self {
        let (rows, u) = (h.rows(), h.cols());
        let levels = constellation.levels();
        let side = levels.len();
        let mut products = vec![Complex::zero(); u * side * rows];
        for uu in 0..u {
            for (li, &lv) in levels.iter().enumerate() {
                for b in 0..rows {
                    products[(uu * side + li) * rows + b] = h[(b, uu)].scale(lv);
                }
            }
        }
        Self { rows, side, products }
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    /// Real multiplications spent building the table.
    pub fn build_cost(rows: usize, users: usize, side: usize) -> u64 {
        2 * (side * rows * users) as u64
    }

    /// `½‖y − Hx‖²` for the lattice point with the given symbol indices.
    pub fn objective(&self, y: &[Complex<T>], symbols: &[usize]) -> T {
        let (rows, side) = (self.rows, self.side);
        let mut acc = T::zero();
        for (b, yb) in y.iter().enumerate().take(rows) {
            let mut s = Complex::<T>::zero();
            for (u, &idx) in symbols.iter().enumerate() {
                let (ir, ii) = (idx / side, idx % side);
                let tr = self.products[(u * side + ir) * rows + b];
                let ti = self.products[(u * side + ii) * rows + b];
                // tr + j·ti
                s.re += tr.re - ti.im;
                s.im += tr.im + ti.re;
            }
            acc += (yb - s).norm_sqr();
        }
        acc * T::lit(0.5)
    }
}

/// One DU: its cluster data plus a symbol table for lattice candidates.
#[derive(Debug, Clone)]
pub struct DistributedUnit<T> {
    id: usize,
    view: ClusterView<T>,
    table: SymbolTable<T>,
}

impl<T: Real> DistributedUnit<T> {
    fn new(id: usize, view: ClusterView<T>) -> Self {
        Self {
            id,
            view,
            table: SymbolTable::default(),
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    fn log(&self, log: Option<&Mutex<Vec<Access>>>) {
        if let Some(l) = log {
            l.lock().unwrap().push(Access {
                unit: self.id,
                owner: self.id,
            });
        }
    }

    /// `½‖y_c − H_c x‖²` for an arbitrary (possibly off-lattice) `x`.
    pub fn objective(&self, x: &[Complex<T>]) -> T {
        let hx = self.view.h.mul_vec(x);
        let r: T = self.view.y.iter().zip(&hx).map(|(a, b)| (a - b).norm_sqr()).sum();
        r * T::lit(0.5)
    }

    /// `−H_cᴴ(y_c − H_c p)`.
    pub fn gradient(&self, p: &[Complex<T>]) -> Vec<Complex<T>> {
        let hp = self.view.h.mul_vec(p);
        let r: Vec<Complex<T>> = self.view.y.iter().zip(&hp).map(|(a, b)| b - a).collect();
        self.view.h.mul_adjoint_vec(&r)
    }

    pub fn gram_diag(&self) -> Vec<T> {
        self.view.h.column_norms_sqr()
    }

    pub fn gram(&self) -> CMatrix<T> {
        self.view.h.gram()
    }
}

/// Closed-form interconnection bandwidth modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthMode {
    Centralized,
    MiniStar,
    MiniChain,
}

impl fmt::Display for BandwidthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BandwidthMode::Centralized => "centralized",
            BandwidthMode::MiniStar => "mini_star",
            BandwidthMode::MiniChain => "mini_chain",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandwidthParams {
    pub b: u64,
    pub u: u64,
    pub c: u64,
    pub m: u64,
    pub s: u64,
    pub ng: u64,
    pub omega: u64,
    pub qam_order: u64,
}

/// Bits crossing CU-incident links for one detected symbol vector.
pub fn predicted_bandwidth(mode: BandwidthMode, p: &BandwidthParams) -> u64 {
    let log2m = p.qam_order.trailing_zeros() as u64;
    match mode {
        BandwidthMode::Centralized => 2 * (p.b * p.u + p.b) * p.omega,
        BandwidthMode::MiniStar => {
            4 * p.ng * p.s * p.u * p.omega * p.m + (p.s + 1) * p.u * log2m * p.c + (p.s + 1 + p.u) * p.omega * p.c
        }
        BandwidthMode::MiniChain => {
            4 * p.ng * p.s * p.u * p.omega + (p.s + 1) * p.u * log2m + (p.s + 1 + p.u) * p.omega
        }
    }
}

/// The whole fabric for one detection: DUs, topology, ledger and counters.
#[derive(Debug)]
pub struct Fabric<T> {
    units: Vec<DistributedUnit<T>>,
    users: usize,
    cluster_size: usize,
    side: usize,
    constellation: Constellation<T>,
    ledger: MessageLedger,
    counters: OpCounters,
    access_log: Option<Mutex<Vec<Access>>>,
}

impl<T: Real> Fabric<T> {
    pub fn new(
        channel: ClusteredChannel<T>,
        kind: TopologyKind,
        constellation: &Constellation<T>,
        omega: u32,
    ) -> Result<Self> {
        let users = channel.users();
        let cluster_size = channel.cluster_size();
        let topology = Topology::new(kind, channel.num_clusters())?;
        let units: Vec<_> = channel
            .into_clusters()
            .into_iter()
            .enumerate()
            .map(|(c, v)| DistributedUnit::new(c, v))
            .collect();
        Ok(Self {
            counters: OpCounters::new(units.len()),
            units,
            users,
            cluster_size,
            side: constellation.side(),
            constellation: constellation.clone(),
            ledger: MessageLedger::new(topology, omega, constellation.order()),
            access_log: None,
        })
    }

    /// Turns on DU storage-access logging.
    pub fn with_access_log(mut self) -> Self {
        self.access_log = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn access_log(&self) -> Vec<Access> {
        self.access_log
            .as_ref()
            .map(|l| l.lock().unwrap().clone())
            .unwrap_or_default()
    }

    #[inline]
    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    #[inline]
    pub fn users(&self) -> usize {
        self.users
    }

    pub fn topology(&self) -> Topology {
        self.ledger.topology()
    }

    pub fn ledger(&self) -> &MessageLedger {
        &self.ledger
    }

    pub fn counters(&self) -> &OpCounters {
        &self.counters
    }

    pub fn counters_mut(&mut self) -> &mut OpCounters {
        &mut self.counters
    }

    pub fn into_parts(self) -> (MessageLedger, OpCounters) {
        (self.ledger, self.counters)
    }

    fn check_unit(&self, c: usize) -> Result<()> {
        if c >= self.units.len() {
            return Err(Error::config(format!("no DU with index {c}")));
        }
        Ok(())
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.users {
            return Err(Error::Dimension {
                expected: self.users,
                got,
            });
        }
        Ok(())
    }

    /// CU → `dests`: one message per link touched. `values` counts payload
    /// values per message (real values for continuous payloads, symbols for QAM).
    pub fn broadcast(&self, dests: &[usize], class: PayloadClass, values: u64) {
        let topo = self.topology();
        for link in topo.links_touching(dests) {
            self.ledger.charge(link, Direction::Down, class, values);
        }
        self.ledger.add_hops(topo.hops(dests));
    }

    /// Charges the upload side of an aggregation over `contributors`.
    /// Star: each contributor's link; chain: partial sums accumulate hop by
    /// hop, so every link on the path carries one payload-sized message.
    fn charge_aggregation(&self, contributors: &[usize], class: PayloadClass, values: u64) {
        let topo = self.topology();
        for link in topo.links_touching(contributors) {
            self.ledger.charge(link, Direction::Up, class, values);
        }
        self.ledger.add_hops(topo.hops(contributors));
    }

    /// Sums per-DU complex vectors at the CU in ascending DU order.
    pub fn aggregate_vectors(&self, contributions: &[(usize, Vec<Complex<T>>)]) -> Vec<Complex<T>> {
        let ids: Vec<usize> = contributions.iter().map(|(c, _)| *c).collect();
        self.charge_aggregation(&ids, PayloadClass::Continuous, 2 * self.users as u64);
        sum_ascending(contributions, vec![Complex::zero(); self.users], |acc, v| {
            for (a, b) in acc.iter_mut().zip(v) {
                *a += b;
            }
        })
    }

    /// Sums per-DU real vectors (scalar class, one value per element).
    pub fn aggregate_reals(&self, contributions: &[(usize, Vec<T>)]) -> Vec<T> {
        let ids: Vec<usize> = contributions.iter().map(|(c, _)| *c).collect();
        let len = contributions.first().map_or(0, |(_, v)| v.len());
        self.charge_aggregation(&ids, PayloadClass::Scalar, len as u64);
        sum_ascending(contributions, vec![T::zero(); len], |acc, v| {
            for (a, b) in acc.iter_mut().zip(v) {
                *a += *b;
            }
        })
    }

    /// Sums per-DU scalars.
    pub fn aggregate_scalars(&self, contributions: &[(usize, T)]) -> T {
        let ids: Vec<usize> = contributions.iter().map(|(c, _)| *c).collect();
        self.charge_aggregation(&ids, PayloadClass::Scalar, 1);
        sum_ascending(contributions, T::zero(), |acc, v| *acc += *v)
    }

    /// DU-local `f_c(x)` for an arbitrary `x` (no ledger traffic).
    pub fn local_objective(&mut self, c: usize, x: &[Complex<T>]) -> Result<T> {
        self.check_unit(c)?;
        self.check_len(x.len())?;
        let unit = &self.units[c];
        unit.log(self.access_log.as_ref());
        let (bc, u) = (self.cluster_size as u64, self.users as u64);
        self.counters.add_du(c, Phase::Sampling, 4 * bc * u + 2 * bc);
        Ok(unit.objective(x))
    }

    /// DU-local `∇f_c(p) = −H_cᴴ(y_c − H_c p)` (no ledger traffic).
    pub fn local_gradient(&mut self, c: usize, p: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        self.check_unit(c)?;
        self.check_len(p.len())?;
        let unit = &self.units[c];
        unit.log(self.access_log.as_ref());
        let (bc, u) = (self.cluster_size as u64, self.users as u64);
        self.counters.add_du(c, Phase::Gradient, 8 * bc * u);
        Ok(unit.gradient(p))
    }

    /// DU-local `(‖h_{1,c}‖², …, ‖h_{U,c}‖²)`.
    pub fn local_gram_diag(&mut self, c: usize) -> Result<Vec<T>> {
        self.check_unit(c)?;
        let unit = &self.units[c];
        unit.log(self.access_log.as_ref());
        let (bc, u) = (self.cluster_size as u64, self.users as u64);
        self.counters.add_du(c, Phase::Preprocessing, 2 * bc * u);
        Ok(unit.gram_diag())
    }

    /// Each DU computes its Gram diagonal; the CU receives `diag(Σ_c D_c)`.
    pub fn gather_gram_diag(&mut self) -> Result<Vec<T>> {
        let parts = (0..self.units.len())
            .map(|c| Ok((c, self.local_gram_diag(c)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.aggregate_reals(&parts))
    }

    /// Each DU computes its full local Gram matrix; the CU receives `Σ_c G_c`.
    /// A Hermitian `U × U` matrix travels as `U²` real values.
    pub fn gather_gram(&mut self) -> Result<CMatrix<T>> {
        let (bc, u) = (self.cluster_size as u64, self.users as u64);
        let n = self.users;
        let mut acc = CMatrix::zeros(n, n);
        for c in 0..self.units.len() {
            let unit = &self.units[c];
            unit.log(self.access_log.as_ref());
            self.counters.add_du(c, Phase::Preprocessing, 4 * bc * u * u);
            acc.add_assign(&unit.gram());
        }
        let ids: Vec<usize> = (0..self.units.len()).collect();
        self.charge_aggregation(&ids, PayloadClass::Scalar, u * u);
        Ok(acc)
    }

    /// Builds every DU's symbol-product table (preprocessing, no traffic).
    pub fn prepare_symbol_tables(&mut self) {
        let (bc, u, l) = (self.cluster_size as u64, self.users as u64, self.side as u64);
        for c in 0..self.units.len() {
            let unit = &mut self.units[c];
            unit.table = SymbolTable::build(&unit.view.h, &self.constellation);
            self.counters.add_du(c, Phase::Preprocessing, 2 * l * bc * u);
        }
    }

    /// Broadcasts `p` to `batch`, has each member compute its local gradient,
    /// and returns the unscaled sum `Σ_{c∈batch} ∇f_c(p)` at the CU.
    pub fn batch_gradient(&mut self, p: &[Complex<T>], batch: &[usize]) -> Result<Vec<Complex<T>>> {
        if batch.is_empty() {
            return Err(Error::config("mini-batch must not be empty"));
        }
        self.check_len(p.len())?;
        self.broadcast(batch, PayloadClass::Continuous, 2 * self.users as u64);
        let parts = batch
            .iter()
            .map(|&c| Ok((c, self.local_gradient(c, p)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.aggregate_vectors(&parts))
    }

    /// Broadcasts a lattice candidate to every DU and returns `f(x) = Σ_c f_c(x)`.
    pub fn evaluate_candidate(&mut self, symbols: &[usize]) -> Result<T> {
        self.check_len(symbols.len())?;
        if self.units.first().is_some_and(|u| u.table.is_empty()) {
            self.prepare_symbol_tables();
        }
        let all: Vec<usize> = (0..self.units.len()).collect();
        self.broadcast(&all, PayloadClass::Qam, self.users as u64);
        let bc = self.cluster_size as u64;
        let mut parts = Vec::with_capacity(self.units.len());
        for c in 0..self.units.len() {
            let unit = &self.units[c];
            unit.log(self.access_log.as_ref());
            self.counters.add_du(c, Phase::Sampling, 2 * bc);
            parts.push((c, unit.table.objective(&unit.view.y, symbols)));
        }
        Ok(self.aggregate_scalars(&parts))
    }

    /// Every DU forwards its raw `(H_c, y_c)` to the CU, as a centralized
    /// detector requires. Chain links carry everything from the DUs below them.
    pub fn upload_raw(&self) {
        let topo = self.topology();
        let per_unit = 2 * (self.cluster_size * self.users + self.cluster_size) as u64;
        match topo.kind {
            TopologyKind::Star => {
                for c in 0..topo.units {
                    self.ledger.charge(c, Direction::Up, PayloadClass::Continuous, per_unit);
                }
                self.ledger.add_hops(1);
            }
            TopologyKind::DaisyChain => {
                for c in 0..topo.units {
                    self.ledger
                        .charge(c, Direction::Up, PayloadClass::Continuous, per_unit * (c as u64 + 1));
                }
                self.ledger.add_hops(topo.units as u64);
            }
        }
    }
}

fn sum_ascending<V: Clone, A>(contributions: &[(usize, V)], init: A, mut add: impl FnMut(&mut A, &V)) -> A {
    let mut order: Vec<&(usize, V)> = contributions.iter().collect();
    order.sort_by_key(|(c, _)| *c);
    let mut acc = init;
    for (_, v) in order {
        add(&mut acc, v);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_rayleigh;
    use crate::rng::{stream_rng, Stream};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn fabric(
        b: usize,
        u: usize,
        cl: usize,
        kind: TopologyKind,
        seed: u64,
    ) -> (Fabric<f64>, CMatrix<f64>, Vec<Complex<f64>>) {
        let h = generate_rayleigh::<f64, _>(b, u, &mut stream_rng(seed, 0, Stream::Channel)).unwrap();
        let mut rng = stream_rng(seed, 0, Stream::Noise);
        let y: Vec<_> = (0..b)
            .map(|_| crate::scalar::complex_normal::<f64, _>(&mut rng))
            .collect();
        let cc = ClusteredChannel::partition(&h, &y, cl).unwrap();
        let k = Constellation::new(16).unwrap();
        (Fabric::new(cc, kind, &k, 16).unwrap(), h, y)
    }

    fn identity_fabric() -> Fabric<f64> {
        let h = CMatrix::<f64>::identity(2);
        let y = vec![c(1.0, 0.0), c(-1.0, 0.0)];
        let cc = ClusteredChannel::partition(&h, &y, 1).unwrap();
        Fabric::new(cc, TopologyKind::Star, &Constellation::new(4).unwrap(), 16).unwrap()
    }

    #[test]
    fn identity_examples() {
        let mut f = identity_fabric();
        let zero = [c(0.0, 0.0); 2];
        assert_relative_eq!(f.local_objective(0, &zero).unwrap(), 1.0);
        let g = f.local_gradient(0, &zero).unwrap();
        assert_eq!(g, vec![c(-1.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(f.local_gram_diag(0).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(
            f.local_gradient(0, &[c(0.0, 0.0)]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(f.local_objective(3, &zero), Err(Error::Config(_))));
    }

    #[test]
    fn gram_diag_doubling_a_column_quadruples_entry() {
        let mut h = CMatrix::<f64>::from_fn(4, 2, |r, k| c(r as f64 - 1.5, 0.5 * k as f64 + 0.25));
        let y = vec![c(0.0, 0.0); 4];
        let base = h.column_norms_sqr();
        for r in 0..4 {
            h[(r, 1)] = h[(r, 1)].scale(2.0);
        }
        let cc = ClusteredChannel::partition(&h, &y, 1).unwrap();
        let mut f = Fabric::new(cc, TopologyKind::Star, &Constellation::new(4).unwrap(), 16).unwrap();
        let d = f.local_gram_diag(0).unwrap();
        assert_relative_eq!(d[0], base[0]);
        assert_relative_eq!(d[1], 4.0 * base[1], max_relative = 1e-14);
    }

    #[test]
    fn local_sums_match_dense_oracles() {
        let (mut f, h, y) = fabric(16, 4, 4, TopologyKind::Star, 11);
        let mut rng = stream_rng(11, 1, Stream::Walk);
        let x: Vec<_> = (0..4)
            .map(|_| crate::scalar::complex_normal::<f64, _>(&mut rng))
            .collect();
        let r = crate::linalg::sub(&y, &h.mul_vec(&x));
        let f_dense = 0.5 * crate::linalg::norm_sqr(&r);
        let g_dense: Vec<_> = h.mul_adjoint_vec(&r).into_iter().map(|v| -v).collect();
        let mut f_sum = 0.0;
        let mut g_sum = vec![c(0.0, 0.0); 4];
        for cl in 0..4 {
            f_sum += f.local_objective(cl, &x).unwrap();
            for (a, b) in g_sum.iter_mut().zip(f.local_gradient(cl, &x).unwrap()) {
                *a += b;
            }
        }
        assert_relative_eq!(f_sum, f_dense, max_relative = 1e-10);
        for (a, b) in g_sum.iter().zip(&g_dense) {
            assert!((a - b).norm() <= 1e-10 * (1.0 + b.norm()));
        }
        let d = f.gather_gram_diag().unwrap();
        let g = h.gram();
        for u in 0..4 {
            assert_relative_eq!(d[u], g[(u, u)].re, max_relative = 1e-10);
        }
    }

    #[test]
    fn symbol_table_objective_matches_direct() {
        let (mut f, _, _) = fabric(8, 3, 2, TopologyKind::Star, 5);
        let k = Constellation::<f64>::new(16).unwrap();
        let sym = [3usize, 14, 7];
        let x: Vec<_> = sym.iter().map(|&i| k.point(i)).collect();
        let direct = f.local_objective(0, &x).unwrap() + f.local_objective(1, &x).unwrap();
        let via_table = f.evaluate_candidate(&sym).unwrap();
        assert_relative_eq!(via_table, direct, max_relative = 1e-12);
    }

    #[test]
    fn star_single_contributor_charges_one_link() {
        let (f, _, _) = fabric(8, 4, 4, TopologyKind::Star, 1);
        f.aggregate_vectors(&[(2, vec![c(1.0, 0.0); 4])]);
        assert_eq!(f.ledger().link_bits(2), 2 * 4 * 16);
        assert_eq!(f.ledger().total_bits(), 2 * 4 * 16);
    }

    #[test]
    fn chain_aggregation_charges_path() {
        let (f, _, _) = fabric(8, 4, 4, TopologyKind::DaisyChain, 1);
        let out = f.aggregate_vectors(&[(3, vec![c(1.0, 1.0); 4]), (0, vec![c(2.0, 0.0); 4])]);
        assert_eq!(out, vec![c(3.0, 1.0); 4]);
        for link in 0..4 {
            assert_eq!(f.ledger().bits(link, Direction::Up, PayloadClass::Continuous), 128);
        }
        assert_eq!(f.ledger().cu_bits(), 128);
        assert_eq!(f.ledger().hops(), 4);
    }

    #[test]
    fn broadcast_costs() {
        let (f, _, _) = fabric(8, 4, 4, TopologyKind::Star, 1);
        f.broadcast(&[0, 1, 2, 3], PayloadClass::Qam, 4);
        assert_eq!(f.ledger().total_bits(), 4 * 4 * 4);
        f.broadcast(&[1, 3], PayloadClass::Continuous, 8);
        assert_eq!(f.ledger().total_bits(), 64 + 2 * 8 * 16);
        let (g, _, _) = fabric(8, 4, 4, TopologyKind::DaisyChain, 1);
        g.broadcast(&[0, 1, 2, 3], PayloadClass::Qam, 4);
        for link in 0..4 {
            assert_eq!(g.ledger().link_bits(link), 16);
        }
    }

    #[test]
    fn aggregation_is_topology_independent() {
        let (fs, _, _) = fabric(16, 4, 4, TopologyKind::Star, 3);
        let (fc, _, _) = fabric(16, 4, 4, TopologyKind::DaisyChain, 3);
        let parts: Vec<(usize, Vec<Complex<f64>>)> = [3usize, 0, 2]
            .iter()
            .map(|&i| (i, vec![c(0.1 * i as f64 + 1e-17, 1.0 / (i as f64 + 3.0)); 4]))
            .collect();
        assert_eq!(fs.aggregate_vectors(&parts), fc.aggregate_vectors(&parts));
    }

    #[test]
    fn dus_only_read_their_own_storage() {
        let (f, _, _) = fabric(16, 4, 4, TopologyKind::Star, 8);
        let mut f = f.with_access_log();
        let p = vec![c(0.3, -0.1); 4];
        f.gather_gram_diag().unwrap();
        f.batch_gradient(&p, &[1, 3]).unwrap();
        f.evaluate_candidate(&[0, 1, 2, 3]).unwrap();
        let log = f.access_log();
        assert!(!log.is_empty());
        assert!(log.iter().all(|a| a.unit == a.owner));
    }

    #[test]
    fn local_gradient_ignores_foreign_clusters() {
        let h = generate_rayleigh::<f64, _>(8, 2, &mut stream_rng(2, 0, Stream::Channel)).unwrap();
        let y = vec![c(0.5, 0.5); 8];
        let mut h2 = h.clone();
        for r in 4..8 {
            h2[(r, 0)] = c(100.0, -100.0);
        }
        let k = Constellation::new(4).unwrap();
        let mut a = Fabric::new(
            ClusteredChannel::partition(&h, &y, 2).unwrap(),
            TopologyKind::Star,
            &k,
            16,
        )
        .unwrap();
        let mut b = Fabric::new(
            ClusteredChannel::partition(&h2, &y, 2).unwrap(),
            TopologyKind::Star,
            &k,
            16,
        )
        .unwrap();
        let p = vec![c(0.2, 0.1), c(-0.4, 0.3)];
        assert_eq!(a.local_gradient(0, &p).unwrap(), b.local_gradient(0, &p).unwrap());
        assert_ne!(a.local_gradient(1, &p).unwrap(), b.local_gradient(1, &p).unwrap());
    }

    #[test]
    fn worked_bandwidth_values() {
        let p = BandwidthParams {
            b: 128,
            u: 8,
            c: 8,
            m: 2,
            s: 4,
            ng: 4,
            omega: 16,
            qam_order: 16,
        };
        assert_eq!(predicted_bandwidth(BandwidthMode::Centralized, &p), 36_864);
        // 4·4·4·8·16·2 + 5·8·4·8 + 13·16·8
        assert_eq!(predicted_bandwidth(BandwidthMode::MiniStar, &p), 16_384 + 1_280 + 1_664);
        // 4·4·4·8·16 + 5·8·4 + 13·16
        assert_eq!(predicted_bandwidth(BandwidthMode::MiniChain, &p), 8_192 + 160 + 208);
        let p256 = BandwidthParams { b: 256, ..p };
        // 2·(256·8 + 256)·16
        assert_eq!(predicted_bandwidth(BandwidthMode::Centralized, &p256), 73_728);
    }

    #[test]
    fn raw_upload_matches_centralized_formula() {
        for kind in [TopologyKind::Star, TopologyKind::DaisyChain] {
            let (f, _, _) = fabric(32, 4, 8, kind, 1);
            f.upload_raw();
            let p = BandwidthParams {
                b: 32,
                u: 4,
                c: 8,
                m: 1,
                s: 1,
                ng: 1,
                omega: 16,
                qam_order: 16,
            };
            assert_eq!(
                f.ledger().cu_bits(),
                predicted_bandwidth(BandwidthMode::Centralized, &p)
            );
        }
    }

    #[test]
    fn ledger_csv_header() {
        let (f, _, _) = fabric(8, 2, 2, TopologyKind::DaisyChain, 1);
        f.broadcast(&[0], PayloadClass::Qam, 2);
        let mut buf = Vec::new();
        f.ledger().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("link,direction,class,bits\n"));
        assert!(text.contains("du0-du1,down,qam,8"));
        assert!(text.contains("du1-cu,down,qam,8"));
    }
}

//! The discrete-event simulation loop.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::{Arc, Mutex, MutexGuard};

use super::config::{AppBinding, ConfigError, ScenarioConfig, TimelineAction};
use super::event_queue::{EventClass, EventQueue};
use super::report::{
    AuditKind, AuditViolation, DirectionShare, OperatorMetrics, Percentiles, Report, RobotMetrics,
    SliceShareReport, UeSeries, VideoMetrics,
};
use crate::apps::{
    deadline_met, ControllerEndpoint, EventSource, RobotEndpoint, RobotState, VideoSession, CONTROL_MESSAGE_BYTES,
};
use crate::control::{
    Autoscaler, CellAgent, CommandLog, CommandLogEntry, Gateway, Origin, SliceCommand, SliceRegistry, SlicingMode,
    StatsReport, TelemetryBuffer, UeInfo,
};
use crate::radio::{
    CellConfig, Delivered, Direction, IntraSliceOrder, Payload, RbAvailability, Rnti, ScheduledSlice, Scheduler,
    SliceDescriptor, SliceId, TtiAllocation, Transport, UeContext, SHARED_POOL,
};
use crate::rng::named_stream;
use crate::time::SimTime;

/// Switches that distinguish batch, live and replay runs of one config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Skip the config's timeline actions.
    pub disable_timeline: bool,
    /// Never evaluate the autoscaler.
    pub disable_autoscale: bool,
    /// Messages to inject at their recorded TTIs.
    pub replay: Option<CommandLog>,
    /// Stop after this many TTIs instead of at `duration_s`.
    pub end_tti: Option<u64>,
}

impl RunOptions {
    /// Options that reproduce a recorded session from its command log.
    pub fn replay(log: CommandLog) -> Self {
        RunOptions {
            disable_timeline: true,
            disable_autoscale: true,
            end_tti: Some(log.end_tti),
            replay: Some(log),
        }
    }
}

#[derive(Debug)]
enum Ev {
    Timeline(usize),
    Tti(u64),
    RobotTick(usize),
    Operator(usize),
    VideoSegment(usize, u64),
    Playout(usize),
    Delivery(Box<Delivered>),
}

#[derive(Debug, Clone, Copy)]
enum AppSlot {
    Robot(usize),
    Operator(usize),
    Video(usize),
}

struct RobotApp {
    rnti: Rnti,
    endpoint: RobotEndpoint,
    controller: ControllerEndpoint,
    period: SimTime,
    feedback_emitted: BTreeMap<u64, SimTime>,
    metrics: RobotMetrics,
}

struct OperatorApp {
    rnti: Rnti,
    source: EventSource,
    emitted_at: BTreeMap<u64, SimTime>,
    metrics: OperatorMetrics,
}

struct VideoApp {
    rnti: Rnti,
    session: VideoSession,
    pending_bytes: u64,
    delivered_bytes: u64,
    segment_period: SimTime,
    tick: SimTime,
}

#[derive(Default, Clone)]
struct ShareAcc {
    ttis: u64,
    /// Runs of (configured share, TTIs) so the mean carries no drift.
    configured: Vec<(f64, u64)>,
    quota: u64,
    granted: u64,
}

pub struct Engine {
    config: ScenarioConfig,
    cell: CellConfig,
    tti: SimTime,
    end_tti: u64,
    end_time: SimTime,
    queue: EventQueue<Ev>,
    ues: Vec<UeContext>,
    scheduler: Scheduler,
    transport: Transport,
    telemetry: TelemetryBuffer,
    agent: CellAgent,
    gateway: Arc<Mutex<Gateway>>,
    autoscaler: Autoscaler,
    options: RunOptions,
    robots: Vec<RobotApp>,
    operators: Vec<OperatorApp>,
    videos: Vec<VideoApp>,
    apps: BTreeMap<Rnti, AppSlot>,
    reports: Vec<StatsReport>,
    fresh_reports: Vec<StatsReport>,
    shares: BTreeMap<(SliceId, Direction), ShareAcc>,
    labels: BTreeMap<SliceId, String>,
    audit: Vec<AuditViolation>,
    replay: BTreeMap<u64, Vec<CommandLogEntry>>,
    next_tti: u64,
    now: SimTime,
    finalized: bool,
}

impl Engine {
    pub fn new(config: ScenarioConfig, options: RunOptions) -> Result<Self, ConfigError> {
        let cell = config.validate()?;
        let tti = cell.tti();
        let natural_end = (config.duration_s / cell.tti_duration_s).round() as u64;
        let end_tti = options.end_tti.unwrap_or(natural_end);
        let end_time = SimTime::from_nanos(end_tti * tti.as_nanos());
        let stats_period_ttis = config.stats_period_ttis(&cell);

        let registry = match config.mode {
            SlicingMode::Sliced => SliceRegistry::from_slices(&config.slices)
                .map_err(|e| ConfigError::Invalid(format!("slices: {e}")))?,
            SlicingMode::Baseline => SliceRegistry::default(),
        };
        let mut labels: BTreeMap<SliceId, String> =
            registry.slices().map(|s| (s.slice_id, s.label.clone())).collect();
        if config.mode == SlicingMode::Baseline {
            labels.insert(SHARED_POOL, "shared".into());
        }

        let mut ues: Vec<UeContext> = config
            .ues
            .iter()
            .map(|u| {
                let mut ue = UeContext::new(u.rnti, u.imsi.clone(), u.slice_id);
                ue.cqi_dl = u.cqi_dl;
                ue.cqi_ul = u.cqi_ul;
                ue.control_priority_flag = u.control_priority_flag;
                ue
            })
            .collect();
        ues.sort_by_key(|u| u.rnti);

        let infos = config
            .ues
            .iter()
            .map(|u| UeInfo {
                rnti: u.rnti,
                imsi: u.imsi.clone(),
                slice_id: u.slice_id,
                cqi_dl: u.cqi_dl,
                cqi_ul: u.cqi_ul,
                control_priority_flag: u.control_priority_flag,
            })
            .collect();
        let (cfg_tx, cfg_rx) = mpsc::channel();
        let (stats_tx, stats_rx) = mpsc::channel();
        let gateway = Gateway::new(config.mode, registry.clone(), infos, cfg_tx, stats_rx);
        let agent = CellAgent::new(cfg_rx, stats_tx, registry, tti, stats_period_ttis);

        let mut queue = EventQueue::new();
        let mut robots = Vec::new();
        let mut operators = Vec::new();
        let mut videos = Vec::new();
        let mut apps = BTreeMap::new();
        for u in &config.ues {
            match u.app {
                AppBinding::Robot => {
                    let rc = &config.robot;
                    let start = rc.start_pose();
                    let endpoint = RobotEndpoint::new(
                        RobotState::new(start, rc.geometry),
                        SimTime::from_secs_f64(rc.physics_dt_s),
                    );
                    let controller = ControllerEndpoint::new(start, rc.path.clone(), rc.gains, rc.geometry);
                    apps.insert(u.rnti, AppSlot::Robot(robots.len()));
                    queue.push(SimTime::ZERO, EventClass::App, Ev::RobotTick(robots.len()));
                    robots.push(RobotApp {
                        rnti: u.rnti,
                        endpoint,
                        controller,
                        period: SimTime::from_secs_f64(rc.control_period_s),
                        feedback_emitted: BTreeMap::new(),
                        metrics: RobotMetrics {
                            rnti: u.rnti,
                            feedback_sent: 0,
                            commands_delivered: 0,
                            rtt_ms: Vec::new(),
                            rtt: None,
                            feedback_delay_ms: Vec::new(),
                            command_delay_ms: Vec::new(),
                            cross_track: Vec::new(),
                            rms_cross_track_m: 0.0,
                        },
                    });
                }
                AppBinding::EventOperator => {
                    let source = EventSource::new(
                        config.event.clone(),
                        named_stream(config.seed, &format!("event/{}", u.rnti)),
                    );
                    if let Some(t) = source.next_emission() {
                        queue.push(t, EventClass::App, Ev::Operator(operators.len()));
                    }
                    apps.insert(u.rnti, AppSlot::Operator(operators.len()));
                    operators.push(OperatorApp {
                        rnti: u.rnti,
                        source,
                        emitted_at: BTreeMap::new(),
                        metrics: OperatorMetrics {
                            rnti: u.rnti,
                            emitted: 0,
                            delivered: 0,
                            latency_ms: Vec::new(),
                            latency: None,
                            deadline_s: config.event.deadline_s,
                            deadline_met: 0,
                            overdue: 0,
                            deadline_met_fraction: 1.0,
                        },
                    });
                }
                AppBinding::Video => {
                    let p = config.video;
                    let i = videos.len();
                    apps.insert(u.rnti, AppSlot::Video(i));
                    queue.push(SimTime::ZERO, EventClass::App, Ev::VideoSegment(i, 0));
                    let tick = SimTime::from_secs_f64(p.playout_tick_s);
                    queue.push(tick, EventClass::App, Ev::Playout(i));
                    videos.push(VideoApp {
                        rnti: u.rnti,
                        session: VideoSession::new(p),
                        pending_bytes: 0,
                        delivered_bytes: 0,
                        segment_period: SimTime::from_secs_f64(p.segment_duration_s()),
                        tick,
                    });
                }
                AppBinding::None => {}
            }
        }

        if !options.disable_timeline {
            for (i, entry) in config.timeline.iter().enumerate() {
                queue.push(SimTime::from_secs_f64(entry.t), EventClass::Timeline, Ev::Timeline(i));
            }
        }
        if end_tti > 0 {
            queue.push(SimTime::ZERO, EventClass::Tti, Ev::Tti(0));
        }

        let mut replay: BTreeMap<u64, Vec<CommandLogEntry>> = BTreeMap::new();
        if let Some(log) = &options.replay {
            for e in &log.entries {
                replay.entry(e.tti).or_default().push(e.clone());
            }
        }

        let unallocated = config.unallocated_prbs;
        Ok(Engine {
            transport: Transport::new(config.seed),
            autoscaler: Autoscaler::new(config.autoscale.clone()),
            config,
            cell,
            tti,
            end_tti,
            end_time,
            queue,
            ues,
            scheduler: Scheduler::new(unallocated),
            telemetry: TelemetryBuffer::new(),
            agent,
            gateway: Arc::new(Mutex::new(gateway)),
            options,
            robots,
            operators,
            videos,
            apps,
            reports: Vec::new(),
            fresh_reports: Vec::new(),
            shares: BTreeMap::new(),
            labels,
            audit: Vec::new(),
            replay,
            next_tti: 0,
            now: SimTime::ZERO,
            finalized: false,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn cell(&self) -> &CellConfig {
        &self.cell
    }

    pub fn gateway(&self) -> Arc<Mutex<Gateway>> {
        Arc::clone(&self.gateway)
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn end_time(&self) -> SimTime {
        self.end_time
    }

    /// TTIs fully processed so far.
    pub fn ttis_done(&self) -> u64 {
        self.next_tti
    }

    pub fn is_finished(&self) -> bool {
        self.finalized
    }

    pub fn ues(&self) -> &[UeContext] {
        &self.ues
    }

    pub fn audit(&self) -> &[AuditViolation] {
        &self.audit
    }

    /// Stats reports produced since the last call.
    pub fn take_fresh_reports(&mut self) -> Vec<StatsReport> {
        std::mem::take(&mut self.fresh_reports)
    }

    pub fn command_log(&self) -> CommandLog {
        CommandLog {
            end_tti: self.next_tti,
            entries: self.agent.log().to_vec(),
        }
    }

    fn lock_gateway(&self) -> MutexGuard<'_, Gateway> {
        self.gateway.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Processes every event strictly before `limit` (capped at the end of
    /// the run) and finalizes the run once the end is reached.
    pub fn run_until(&mut self, limit: SimTime) {
        let limit = limit.min(self.end_time);
        while let Some(t) = self.queue.peek_time() {
            if t >= limit {
                break;
            }
            let (t, _, ev) = self.queue.pop().expect("peeked");
            self.now = t;
            self.dispatch(t, ev);
        }
        self.now = self.now.max(limit);
        if limit >= self.end_time {
            self.finalize();
        }
    }

    /// Ends the run early at the current TTI boundary.
    pub fn stop_now(&mut self) {
        let boundary = SimTime::from_nanos(self.next_tti * self.tti.as_nanos());
        self.end_tti = self.next_tti;
        self.end_time = boundary;
        self.run_until(boundary);
        self.finalize();
    }

    pub fn run_to_end(mut self) -> Report {
        let end = self.end_time;
        self.run_until(end);
        self.into_report()
    }

    fn dispatch(&mut self, t: SimTime, ev: Ev) {
        match ev {
            Ev::Timeline(i) => self.on_timeline(i),
            Ev::Tti(k) => self.on_tti(k, t),
            Ev::RobotTick(i) => self.on_robot_tick(i, t),
            Ev::Operator(i) => self.on_operator(i, t),
            Ev::VideoSegment(i, n) => self.on_video_segment(i, n, t),
            Ev::Playout(i) => self.on_playout(i, t),
            Ev::Delivery(d) => self.on_delivery(*d, t),
        }
    }

    fn violation(&mut self, tti: u64, kind: AuditKind, detail: String) {
        self.audit.push(AuditViolation { tti, kind, detail });
    }

    fn on_timeline(&mut self, i: usize) {
        let entry = self.config.timeline[i].clone();
        let tti = self.next_tti;
        let result = match entry.action {
            TimelineAction::RelocateUe { rnti, slice_id } => {
                self.lock_gateway().relocate_ue(Origin::Timeline, rnti, slice_id).map(|_| ())
            }
            TimelineAction::CreateSlice { slice } => self
                .lock_gateway()
                .apply_slice_command(Origin::Timeline, SliceCommand::Create { descriptor: slice })
                .map(|_| ()),
            TimelineAction::UpdateSlice { slice } => self
                .lock_gateway()
                .apply_slice_command(Origin::Timeline, SliceCommand::Update { descriptor: slice })
                .map(|_| ()),
            TimelineAction::DeleteSlice { slice_id } => self
                .lock_gateway()
                .apply_slice_command(Origin::Timeline, SliceCommand::Delete { slice_id })
                .map(|_| ()),
            TimelineAction::EnableAutoscale { policy } => {
                let mut p = policy.unwrap_or_else(|| self.config.autoscale.clone());
                p.enabled = true;
                self.autoscaler.policy = p;
                Ok(())
            }
            TimelineAction::DisableAutoscale => {
                self.autoscaler.policy.enabled = false;
                Ok(())
            }
        };
        if let Err(e) = result {
            self.violation(tti, AuditKind::CommandRejected, format!("timeline action at {} s: {e}", entry.t));
        }
    }

    fn scheduled_slices(&self) -> Vec<ScheduledSlice> {
        match self.config.mode {
            SlicingMode::Baseline => vec![ScheduledSlice {
                descriptor: SliceDescriptor {
                    slice_id: SHARED_POOL,
                    label: "shared".into(),
                    dl_share: self.config.baseline_share,
                    ul_share: self.config.baseline_share,
                    priority: 0,
                    rb_availability: RbAvailability::High,
                },
                order: IntraSliceOrder::ControlFirst,
            }],
            SlicingMode::Sliced => self
                .agent
                .registry()
                .slices()
                .cloned()
                .map(ScheduledSlice::round_robin)
                .collect(),
        }
    }

    fn on_tti(&mut self, k: u64, t: SimTime) {
        if let Some(entries) = self.replay.remove(&k) {
            for e in entries {
                let res = self.lock_gateway().submit(Origin::Replay, e.message.clone());
                if let Err(err) = res {
                    self.violation(k, AuditKind::CommandRejected, format!("replayed {:?}: {err}", e.message));
                }
            }
        }

        let outcome = self
            .agent
            .southbound_exchange(k, &self.telemetry, &mut self.ues, &mut self.scheduler);
        for (env, err) in outcome.rejected {
            self.violation(k, AuditKind::CommandRejected, format!("agent rejected {:?}: {err}", env.message));
        }
        for env in &outcome.applied {
            if let Some(SliceCommand::Create { descriptor } | SliceCommand::Update { descriptor }) =
                env.message.as_slice_command()
            {
                self.labels.insert(descriptor.slice_id, descriptor.label);
            }
        }
        if let Some(report) = outcome.report {
            self.on_report(report, k);
        }

        self.transport.requeue_due(k);
        for ue in self.ues.iter_mut() {
            self.transport.sync_ue(ue);
        }

        let slices = self.scheduled_slices();
        for dir in [Direction::Ul, Direction::Dl] {
            let alloc = self.scheduler.allocate_tti(&self.cell, &slices, &mut self.ues, k, dir);
            self.audit_allocation(&alloc, &slices);
            let shares: BTreeMap<SliceId, f64> =
                slices.iter().map(|s| (s.descriptor.slice_id, s.descriptor.share(dir))).collect();
            for q in &alloc.quotas {
                let acc = self.shares.entry((q.slice_id, dir)).or_default();
                acc.ttis += 1;
                let share = shares[&q.slice_id];
                match acc.configured.last_mut() {
                    Some((s, n)) if *s == share => *n += 1,
                    _ => acc.configured.push((share, 1)),
                }
                acc.quota += u64::from(q.quota);
                acc.granted += u64::from(q.granted);
            }
            self.telemetry.record_allocation(t, &alloc, &shares);
            for d in self.transport.transport_step(&alloc, t, self.tti, &self.config.link) {
                self.queue.push(d.delivered_at, EventClass::App, Ev::Delivery(Box::new(d)));
            }
        }
        for ue in self.ues.iter_mut() {
            self.transport.sync_ue(ue);
        }
        let unbalanced: Vec<String> = self
            .transport
            .ledgers()
            .filter(|(_, l)| !l.balanced())
            .map(|((r, d), l)| format!("rnti {r} {}: {l:?}", d.as_str()))
            .collect();
        for detail in unbalanced {
            self.violation(k, AuditKind::QueueConservation, detail);
        }

        self.telemetry.record_ues(t, &self.ues);
        self.telemetry.advance_to(t + self.tti);
        self.next_tti = k + 1;
        if k + 1 < self.end_tti {
            self.queue.push(t + self.tti, EventClass::Tti, Ev::Tti(k + 1));
        }
    }

    fn audit_allocation(&mut self, alloc: &TtiAllocation, slices: &[ScheduledSlice]) {
        let k = alloc.tti_index;
        let dir = alloc.direction.as_str();
        let mut seen = vec![false; self.cell.prb_count as usize];
        let mut found = Vec::new();
        for g in &alloc.grants {
            match seen.get_mut(g.prb_index as usize) {
                Some(s) if !*s => *s = true,
                Some(_) => found.push((AuditKind::PrbExclusivity, format!("{dir} PRB {} granted twice", g.prb_index))),
                None => found.push((AuditKind::PrbExclusivity, format!("{dir} PRB {} outside grid", g.prb_index))),
            }
            match self.ues.iter().find(|u| u.rnti == g.rnti) {
                Some(ue) => {
                    if ue.scheduling_slice() != g.slice_id || !slices.iter().any(|s| s.descriptor.slice_id == g.slice_id) {
                        found.push((
                            AuditKind::SliceBinding,
                            format!("{dir} PRB {} for rnti {} charged to slice {}", g.prb_index, g.rnti, g.slice_id),
                        ));
                    }
                    let expect = self.cell.bits_per_prb(ue.cqi(alloc.direction));
                    if expect != g.bits_served {
                        found.push((
                            AuditKind::BitsMismatch,
                            format!("{dir} PRB {}: {} bits, CQI allows {expect}", g.prb_index, g.bits_served),
                        ));
                    }
                }
                None => found.push((AuditKind::SliceBinding, format!("{dir} grant to unknown rnti {}", g.rnti))),
            }
        }
        let schedulable = match self.scheduler.unallocated() {
            crate::radio::UnallocatedPrbs::Lend => self.cell.prb_count,
            crate::radio::UnallocatedPrbs::Reserve => alloc.quotas.iter().map(|q| q.quota).sum(),
        };
        if (alloc.grants.len() as u32) < schedulable {
            let backlogged: Vec<Rnti> = self
                .ues
                .iter()
                .filter(|u| {
                    u.queue_bytes(alloc.direction) > 0
                        && self.cell.bits_per_prb(u.cqi(alloc.direction)) >= 8
                        && slices.iter().any(|s| s.descriptor.slice_id == u.scheduling_slice())
                })
                .map(|u| u.rnti)
                .collect();
            if !backlogged.is_empty() {
                found.push((
                    AuditKind::WorkConservation,
                    format!(
                        "{dir}: {} of {schedulable} PRBs used while {backlogged:?} backlogged",
                        alloc.grants.len()
                    ),
                ));
            }
        }
        for (kind, detail) in found {
            self.violation(k, kind, detail);
        }
    }

    fn on_report(&mut self, report: StatsReport, tti: u64) {
        self.telemetry
            .prune_before(SimTime::from_nanos(tti * self.tti.as_nanos()));
        self.reports.push(report.clone());
        self.fresh_reports.push(report);

        let mut gw = self.gateway.lock().unwrap_or_else(|p| p.into_inner());
        gw.poll_stats();
        if self.options.disable_autoscale || !self.autoscaler.policy.enabled {
            return;
        }
        let horizon = self.autoscaler.policy.evaluation_period_s;
        let newest_end = gw.history().back().map_or(0.0, |r| r.window_end);
        let recent: Vec<StatsReport> = gw
            .history()
            .iter()
            .rev()
            .take_while(|r| r.window_start >= newest_end - horizon - 1e-9)
            .cloned()
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        let commands = self.autoscaler.autoscale_step(&recent, gw.registry());
        let mut rejected = Vec::new();
        for c in commands {
            if let Err(e) = gw.apply_slice_command(Origin::Autoscale, c.clone()) {
                rejected.push(format!("autoscale command {c:?}: {e}"));
            }
        }
        drop(gw);
        for r in rejected {
            self.violation(tti, AuditKind::CommandRejected, r);
        }
    }

    fn enqueue(&mut self, rnti: Rnti, dir: Direction, bytes: u32, now: SimTime, payload: Payload) {
        self.transport.enqueue(rnti, dir, bytes, now, payload);
    }

    fn on_robot_tick(&mut self, i: usize, t: SimTime) {
        let robot = &mut self.robots[i];
        let fb = robot.endpoint.tick(t);
        let (e, _) = robot.controller.path.tracking_error(&robot.endpoint.state.pose);
        robot.metrics.cross_track.push((t.as_secs_f64(), e));
        robot.metrics.feedback_sent += 1;
        robot.feedback_emitted.insert(fb.seq, t);
        let rnti = robot.rnti;
        let next = t + robot.period;
        self.enqueue(rnti, Direction::Ul, CONTROL_MESSAGE_BYTES as u32, t, Payload::Feedback(fb));
        if next < self.end_time {
            self.queue.push(next, EventClass::App, Ev::RobotTick(i));
        }
    }

    fn on_operator(&mut self, i: usize, t: SimTime) {
        let op = &mut self.operators[i];
        let seqs = op.source.step(t);
        let size = op.source.config().command_size_bytes;
        let rnti = op.rnti;
        for &seq in &seqs {
            op.emitted_at.insert(seq, t);
            op.metrics.emitted += 1;
        }
        let next = op.source.next_emission();
        for seq in seqs {
            self.enqueue(rnti, Direction::Ul, size, t, Payload::Actuation { seq });
        }
        if let Some(n) = next.filter(|n| *n < self.end_time) {
            self.queue.push(n, EventClass::App, Ev::Operator(i));
        }
    }

    fn on_video_segment(&mut self, i: usize, n: u64, t: SimTime) {
        let v = &self.videos[i];
        let (rnti, seg, pkt) = (v.rnti, v.session.params.segment_size_bytes, v.session.params.packet_bytes);
        let next = t + v.segment_period;
        let mut left = seg;
        while left > 0 {
            let b = left.min(pkt);
            self.enqueue(rnti, Direction::Dl, b, t, Payload::Video);
            left -= b;
        }
        if next < self.end_time {
            self.queue.push(next, EventClass::App, Ev::VideoSegment(i, n + 1));
        }
    }

    fn on_playout(&mut self, i: usize, t: SimTime) {
        let v = &mut self.videos[i];
        let bytes = std::mem::take(&mut v.pending_bytes);
        v.session.step(bytes, v.tick.as_secs_f64());
        let next = t + v.tick;
        if next < self.end_time {
            self.queue.push(next, EventClass::App, Ev::Playout(i));
        }
    }

    fn on_delivery(&mut self, d: Delivered, t: SimTime) {
        self.telemetry
            .record_delivery(t, d.rnti, d.direction, u64::from(d.packet.bytes));
        let Some(slot) = self.apps.get(&d.rnti).copied() else {
            return;
        };
        match (slot, &d.packet.payload) {
            (AppSlot::Robot(i), Payload::Feedback(fb)) => {
                let robot = &mut self.robots[i];
                robot
                    .metrics
                    .feedback_delay_ms
                    .push((t - fb.timestamp).as_millis_f64());
                if let Some(cmd) = robot.controller.on_feedback(fb) {
                    let rnti = robot.rnti;
                    self.enqueue(rnti, Direction::Dl, CONTROL_MESSAGE_BYTES as u32, t, Payload::Command(cmd));
                }
            }
            (AppSlot::Robot(i), Payload::Command(cmd)) => {
                let robot = &mut self.robots[i];
                robot.metrics.commands_delivered += 1;
                robot
                    .metrics
                    .command_delay_ms
                    .push((t - d.packet.enqueued_at).as_millis_f64());
                if let Some(sent) = robot.feedback_emitted.remove(&cmd.feedback_seq) {
                    robot.metrics.rtt_ms.push((t - sent).as_millis_f64());
                }
                // Older feedback can no longer be answered.
                robot.feedback_emitted.retain(|s, _| *s > cmd.feedback_seq);
                robot.endpoint.on_command(*cmd);
            }
            (AppSlot::Operator(i), Payload::Actuation { seq }) => {
                let op = &mut self.operators[i];
                if let Some(sent) = op.emitted_at.remove(seq) {
                    let latency = t - sent;
                    op.metrics.delivered += 1;
                    op.metrics.latency_ms.push(latency.as_millis_f64());
                    if deadline_met(latency.as_secs_f64(), op.metrics.deadline_s) {
                        op.metrics.deadline_met += 1;
                    }
                }
            }
            (AppSlot::Video(i), Payload::Video) => {
                let v = &mut self.videos[i];
                v.pending_bytes += u64::from(d.packet.bytes);
                v.delivered_bytes += u64::from(d.packet.bytes);
            }
            _ => {}
        }
    }

    fn finalize(&mut self) {
        if self.finalized {
            return;
        }
        self.finalized = true;
        let end_tti = self.next_tti;
        if let Some(r) = self.agent.push_stats(end_tti, &self.telemetry) {
            self.on_report(r, end_tti);
        }
    }

    pub fn into_report(mut self) -> Report {
        self.finalize();
        let simulated_s = SimTime::from_nanos(self.next_tti * self.tti.as_nanos()).as_secs_f64();
        let end = self.end_time;

        let mut series: BTreeMap<Rnti, UeSeries> = BTreeMap::new();
        for r in &self.reports {
            for u in &r.ues {
                let s = series.entry(u.rnti).or_insert_with(|| UeSeries {
                    rnti: u.rnti,
                    t: Vec::new(),
                    slice_id: Vec::new(),
                    dl_mbps: Vec::new(),
                    ul_mbps: Vec::new(),
                });
                s.t.push(r.window_end);
                s.slice_id.push(u.slice_id);
                s.dl_mbps.push(u.dl_throughput_bps / 1e6);
                s.ul_mbps.push(u.ul_throughput_bps / 1e6);
            }
        }

        let robots = self
            .robots
            .into_iter()
            .map(|r| {
                let mut m = r.metrics;
                m.rtt = Percentiles::of(&m.rtt_ms);
                let n = m.cross_track.len().max(1) as f64;
                m.rms_cross_track_m = (m.cross_track.iter().map(|(_, e)| e * e).sum::<f64>() / n).sqrt();
                m
            })
            .collect();

        let operators = self
            .operators
            .into_iter()
            .map(|o| {
                let mut m = o.metrics;
                m.latency = Percentiles::of(&m.latency_ms);
                let deadline = SimTime::from_secs_f64(m.deadline_s);
                m.overdue = o.emitted_at.values().filter(|t| end.saturating_sub(**t) > deadline).count() as u64;
                let judged = m.delivered + m.overdue;
                m.deadline_met_fraction = if judged == 0 {
                    1.0
                } else {
                    m.deadline_met as f64 / judged as f64
                };
                m
            })
            .collect();

        let videos = self
            .videos
            .into_iter()
            .map(|v| VideoMetrics {
                rnti: v.rnti,
                bitrate_bps: v.session.params.bitrate_bps,
                delivered_bytes: v.delivered_bytes,
                goodput_bps: if simulated_s > 0.0 {
                    v.delivered_bytes as f64 * 8.0 / simulated_s
                } else {
                    0.0
                },
                stall_count: v.session.stall_count,
                total_stall_duration_s: v.session.total_stall_duration_s,
                startup_delay_s: v.session.startup_delay_s,
                stalls: v.session.stalls.clone(),
                final_state: v.session.state,
                final_buffer_s: v.session.buffer_s,
            })
            .collect();

        let prb = f64::from(self.cell.prb_count);
        let mut ids: Vec<SliceId> = self.shares.keys().map(|(id, _)| *id).collect();
        ids.dedup();
        let slices = ids
            .into_iter()
            .map(|id| {
                let share = |dir| {
                    let acc = self.shares.get(&(id, dir)).cloned().unwrap_or_default();
                    let n = acc.ttis.max(1) as f64;
                    DirectionShare {
                        configured: acc.configured.iter().map(|(s, k)| s * *k as f64).sum::<f64>() / n,
                        quota: acc.quota as f64 / (n * prb),
                        granted: acc.granted as f64 / (n * prb),
                    }
                };
                SliceShareReport {
                    slice_id: id,
                    label: self.labels.get(&id).cloned().unwrap_or_default(),
                    ttis: self.shares.get(&(id, Direction::Dl)).map_or(0, |a| a.ttis),
                    dl: share(Direction::Dl),
                    ul: share(Direction::Ul),
                }
            })
            .collect();

        Report {
            version: env!("CARGO_PKG_VERSION").to_string(),
            stats_period_s: self.config.stats_period_s,
            prb_count: self.cell.prb_count,
            config: self.config,
            simulated_s,
            throughput: series.into_values().collect(),
            robots,
            operators,
            videos,
            slices,
            audit: self.audit,
        }
    }
}

/// Runs a scenario in batch mode.
pub fn run_scenario(config: ScenarioConfig) -> Result<Report, ConfigError> {
    Ok(Engine::new(config, RunOptions::default())?.run_to_end())
}

/// Re-runs a recorded session from its command log.
pub fn replay_scenario(config: ScenarioConfig, log: CommandLog) -> Result<Report, ConfigError> {
    Ok(Engine::new(config, RunOptions::replay(log))?.run_to_end())
}

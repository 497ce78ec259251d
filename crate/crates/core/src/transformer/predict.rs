//! Streaming prediction with the trained classifier.

use super::infer::{InferenceEngine, Workspace};
use super::model::DenoiseModel;
use crate::error::Result;
use crate::event::{Decision, Event, EventStream, SensorGeometry};
use crate::filters::Denoiser;
use crate::graph::GraphBuilder;
use crate::par;

/// Events per parallel classification chunk in batch mode.
const BATCH_CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictMode {
    /// One call per event.
    #[default]
    Sequential,
    /// Graphs are built in arrival order, then classified in parallel.
    Batch,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StreamPredictions {
    pub decisions: Vec<Decision>,
    /// Indices of events outside the sensor; they are reported as noise.
    pub skipped: Vec<usize>,
}

/// The learned classifier as an online filter.
#[derive(Debug, Clone)]
pub struct GnnFilter {
    engine: InferenceEngine,
    builder: GraphBuilder,
    geometry: SensorGeometry,
    ws: Workspace,
    nodes: Vec<[f64; 3]>,
    skipped: Vec<usize>,
    seen: usize,
}

impl GnnFilter {
    pub fn new(model: &DenoiseModel, geometry: SensorGeometry) -> Result<Self> {
        let engine = InferenceEngine::new(model);
        let ws = engine.workspace();
        Ok(GnnFilter {
            builder: GraphBuilder::new(geometry, model.volume)?,
            engine,
            geometry,
            ws,
            nodes: Vec::new(),
            skipped: Vec::new(),
            seen: 0,
        })
    }

    pub fn engine(&self) -> &InferenceEngine {
        &self.engine
    }

    /// Indices (since the last reset) of events that fell outside the sensor.
    pub fn skipped(&self) -> &[usize] {
        &self.skipped
    }
}

impl Denoiser for GnnFilter {
    fn name(&self) -> &str {
        "gnnt"
    }

    fn reset(&mut self) {
        self.builder.reset();
        self.skipped.clear();
        self.seen = 0;
    }

    fn step(&mut self, e: &Event) -> Decision {
        let index = self.seen;
        self.seen += 1;
        if self.geometry.check(e).is_err() || self.builder.next_normalized_into(e, &mut self.nodes).is_err() {
            self.skipped.push(index);
            return Decision::Noise;
        }
        self.engine.decide(&mut self.ws, &self.nodes)
    }

    fn run_batch(&mut self, events: &[Event]) -> Vec<Decision> {
        let mut decisions = Vec::with_capacity(events.len());
        let mut flat: Vec<[f64; 3]> = Vec::new();
        let mut spans: Vec<Option<(usize, usize)>> = Vec::new();
        for chunk in events.chunks(BATCH_CHUNK) {
            flat.clear();
            spans.clear();
            for e in chunk {
                let index = self.seen;
                self.seen += 1;
                if self.geometry.check(e).is_err() || self.builder.next_normalized_into(e, &mut self.nodes).is_err() {
                    self.skipped.push(index);
                    spans.push(None);
                    continue;
                }
                spans.push(Some((flat.len(), self.nodes.len())));
                flat.extend_from_slice(&self.nodes);
            }
            let engine = &self.engine;
            let flat = &flat;
            decisions.extend(par::map_init(&spans, || engine.workspace(), |ws, span| match span {
                Some((start, len)) => engine.decide(ws, &flat[*start..start + len]),
                None => Decision::Noise,
            }));
        }
        decisions
    }
}

/// Classifies every event of `stream` from a fresh state.
pub fn predict_stream(model: &DenoiseModel, stream: &EventStream, mode: PredictMode) -> Result<StreamPredictions> {
    let mut filter = GnnFilter::new(model, stream.geometry())?;
    let decisions = match mode {
        PredictMode::Sequential => stream.events().iter().map(|e| filter.step(e)).collect(),
        PredictMode::Batch => filter.run_batch(stream.events()),
    };
    Ok(StreamPredictions { decisions, skipped: filter.skipped })
}

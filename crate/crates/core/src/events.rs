//! Event data model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    /// Polarity weight in the intensity field, f(p) = p.
    #[inline]
    pub fn weight(self) -> f64 {
        f64::from(self.sign())
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::On => Polarity::Off,
            Polarity::Off => Polarity::On,
        }
    }
}

/// One asynchronous polarity event. `t` is in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Self { t, x, y, p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub width: u32,
    pub height: u32,
}

impl SensorGeometry {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::usage(format!(
                "sensor geometry must be non-empty, got {width}x{height}"
            )));
        }
        if width > u32::from(u16::MAX) + 1 || height > u32::from(u16::MAX) + 1 {
            return Err(Error::usage(format!(
                "sensor geometry {width}x{height} exceeds 16-bit pixel addressing"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        u32::from(x) < self.width && u32::from(y) < self.height
    }

    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// A validated, time-ordered event stream over a fixed sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
    /// Set when the input was not time-ordered and had to be re-sorted.
    resorted: bool,
}

impl EventStream {
    /// Validates every event against `geometry` and sorts by timestamp
    /// (stable, so ties keep their input order).
    pub fn new(geometry: SensorGeometry, mut events: Vec<Event>) -> Result<Self> {
        if let Some((i, e)) = events.iter().enumerate().find(|(_, e)| !geometry.contains(e.x, e.y)) {
            return Err(Error::Validation {
                row: i + 1,
                message: format!(
                    "pixel ({}, {}) outside {}x{} sensor",
                    e.x, e.y, geometry.width, geometry.height
                ),
            });
        }
        let resorted = !events.windows(2).all(|w| w[0].t <= w[1].t);
        if resorted {
            events.sort_by_key(|e| e.t);
        }
        Ok(Self {
            geometry,
            events,
            resorted,
        })
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        Self {
            geometry,
            events: Vec::new(),
            resorted: false,
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn was_resorted(&self) -> bool {
        self.resorted
    }

    /// `(t_first, t_last)` or `None` for an empty stream.
    pub fn time_span(&self) -> Option<(u64, u64)> {
        Some((self.events.first()?.t, self.events.last()?.t))
    }
}

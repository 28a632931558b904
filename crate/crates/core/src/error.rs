use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("state (d = {demand}, s = {supply}) is not on a diagram with capacity {capacity}")]
    InvalidState {
        demand: f64,
        supply: f64,
        capacity: f64,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("CFL bound violated: max wave speed {speed} m/s * dt {dt} s = {travel} m exceeds dx = {dx} m")]
    Cfl {
        speed: f64,
        dt: f64,
        dx: f64,
        travel: f64,
    },

    #[error("cell {cell} density {density} left [0, {jam}] at t = {time} s")]
    DensityOutOfBounds {
        cell: usize,
        density: f64,
        jam: f64,
        time: f64,
    },

    #[error(
        "not enough near-stationary samples to estimate capacity drop \
         ({windows} stationary windows: {free} free-flow, {queued} queued)"
    )]
    Estimation {
        windows: usize,
        free: usize,
        queued: usize,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

//! Sierpinski-family fractals built by escape-criterion iteration, mapped
//! through plane maps with the fractal mapping iteration, and moved as point
//! sets along the flows of planar ODE systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: points, domains, raster grids and the escape-index grid.
//! * [`schemes`]: tent, modified tent, sine and gasket iteration schemes.
//! * [`mapexpr`]: a small expression language for maps and profile functions.
//! * [`fmi`]: plane maps, mapped membership, forward images and orbits.
//! * [`flow`]: RK4 integration of planar systems applied to point sets.
//! * [`analysis`]: IFS oracles, box counting, grid comparison, Lipschitz bounds.
//! * [`io`], [`config`], [`cli`]: file formats and the command-line surface.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod flow;
pub mod fmi;
pub mod geometry;
pub mod io;
pub mod mapexpr;
pub mod schemes;

pub use error::{Error, Result};
pub use geometry::{GridSpec, MembershipGrid, Point2, RectDomain};

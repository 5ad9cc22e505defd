//! A tiered just-in-time execution engine for CoreIR.
//!
//! Programs start in a fueled interpreter ([`interp`]). Functions that get
//! called often are split at their call sites and compiled ([`backend`]) to
//! a register language run by a small VM ([`rtlvm`]) or, on x86-64, to
//! machine code ([`nativegen`]). The [`monitor`] switches between tiers at
//! calls, returns and failed speculations, moving all data through the ten
//! primitives of [`primitives`]. [`refsem`] is an independent reference
//! interpreter, and [`fuzz`] checks the engine against it.
//!
//! ```
//! use tierjit::coreir::parse_program;
//! use tierjit::monitor::{jit_run, Config};
//! use tierjit::refsem::ref_run;
//!
//! let p = parse_program("
//!     Function main():
//!       l1: r1 <- 3 l2
//!       l2: Print r1 l3
//!       l3: Return r1
//! ").unwrap();
//! let jit = jit_run(&p, Config::default());
//! assert_eq!(jit.render(), "3\nstatus: Terminated 3\n");
//! assert_eq!(jit, ref_run(&p, 4096, 1_000_000));
//! ```

pub mod backend;
pub mod bench;
pub mod behavior;
pub mod coreir;
pub mod fault;
pub mod fuzz;
pub mod interp;
pub mod monitor;
pub mod nativegen;
pub mod primitives;
pub mod refsem;
pub mod rtlvm;

pub use behavior::{Behavior, Status};
pub use fault::Fault;

//! Deterministic emulator of a hierarchical SDN/NFV orchestration stack:
//! per-domain packet and optical controllers under a multi-domain network
//! orchestrator, a distributed cloud orchestrator, an NFV orchestrator, and
//! mobile-network workflows (bearer transport, RAN functional split) on top.

pub mod cloud;
pub mod faults;
pub mod fixtures;
pub mod harness;
pub mod ids;
pub mod mobile;
pub mod model;
pub mod netorch;
pub mod nfv;
pub mod optical;
pub mod packet;
pub mod platform;
pub mod rational;
pub mod routing;

pub use platform::Platform;

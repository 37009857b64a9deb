use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::lattice::LatticeRadius;
use crate::state::{FullState, ShellState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotShell {
    pub m: u128,
    pub eta: u32,
    pub amp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDirection {
    pub angle: f64,
    pub shells: Vec<SnapshotShell>,
    pub condensate: f64,
    pub overflow_mass: f64,
    pub overflow_energy: f64,
}

/// Full state as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub xi: u32,
    pub time: f64,
    pub directions: Vec<SnapshotDirection>,
}

pub fn to_snapshot(state: &FullState) -> Snapshot {
    Snapshot {
        xi: state.config.xi,
        time: state.time,
        directions: state
            .directions
            .iter()
            .enumerate()
            .map(|(j, d)| SnapshotDirection {
                angle: state.angle(j),
                shells: d
                    .shells()
                    .map(|(r, g)| SnapshotShell {
                        m: r.numerator(),
                        eta: r.level(),
                        amp: *g,
                    })
                    .collect(),
                condensate: d.condensate,
                overflow_mass: d.overflow_mass,
                overflow_energy: d.overflow_energy,
            })
            .collect(),
    }
}

/// Rebuilds a state; radii must be canonical and match `config.xi`.
pub fn from_snapshot(snap: &Snapshot, config: &ModelConfig) -> Result<FullState, String> {
    if snap.xi != config.xi {
        return Err(format!(
            "snapshot Ξ = {} but config Ξ = {}",
            snap.xi, config.xi
        ));
    }
    let directions = snap
        .directions
        .iter()
        .map(|d| {
            let mut s = ShellState::new(snap.xi);
            for sh in &d.shells {
                let r = LatticeRadius::new(snap.xi, sh.m, sh.eta).map_err(|e| e.to_string())?;
                s.set_amplitude(r, sh.amp);
            }
            s.condensate = d.condensate;
            s.overflow_mass = d.overflow_mass;
            s.overflow_energy = d.overflow_energy;
            Ok(s)
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(FullState {
        directions,
        time: snap.time,
        config: Arc::new(config.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::run;

    #[test]
    fn json_round_trip() {
        let config = ModelConfig {
            n_dir: 3,
            rho_max: 3,
            t_end: 0.2,
            ..Default::default()
        };
        let state = run(&config).unwrap().final_state;
        let text = serde_json::to_string(&to_snapshot(&state)).unwrap();
        let back: Snapshot = serde_json::from_str(&text).unwrap();
        assert_eq!(from_snapshot(&back, &config).unwrap(), state);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let d0 = &v["directions"][0];
        for key in [
            "angle",
            "shells",
            "condensate",
            "overflow_mass",
            "overflow_energy",
        ] {
            assert!(d0.get(key).is_some(), "{key}");
        }
        assert!(d0["shells"][0].get("m").is_some() && d0["shells"][0].get("eta").is_some());
        assert!(v.get("xi").is_some() && v.get("time").is_some());
    }
}

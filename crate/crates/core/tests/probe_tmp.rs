use std::ops::ControlFlow;

use weylmech::dynamics::{
    energy, evolve_with, init_wavepacket_classical, Branch, WavepacketSpec,
};
use weylmech::lattice::{build_lattice, LatticeSpec};
use weylmech::potential::PotentialField;

#[test]
fn probe_wall_seeded_growth_without_tilt() {
    let spec = LatticeSpec::<f64>::grid(200, 60);
    let field = PotentialField::zero(&spec);
    let model = build_lattice(&spec, &field).unwrap();
    let wp = WavepacketSpec {
        center: (30.0, 19.5),
        sigma: 10.0,
        k0: (0.3, 0.0),
        branch: Branch::Forward,
        amplitude: 1.0,
    };
    let (mut s, _) = init_wavepacket_classical(&model, &wp).unwrap();
    let dt = 0.035;
    let n_steps = (200.0 / dt) as usize;
    let every = (20.0 / dt) as usize;
    evolve_with(&model, &mut s, dt, n_steps, |step, st| {
        if step % every == 0 {
            let total: f64 = st.u.iter().map(|x| x * x).sum::<f64>()
                + st.v.iter().map(|x| x * x).sum::<f64>();
            println!(
                "t={:6.1}  quadrature={:.6}  energy={:.9}",
                st.t,
                total,
                energy(&model, st)
            );
        }
        ControlFlow::Continue(())
    })
    .unwrap();
}

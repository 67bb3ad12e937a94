use cq_core::deep::agent::{actor_gradient, actor_objective, build_actor, build_critic, critic_gradient, critic_objectives};
use cq_core::deep::{AgentKind, Matrix, ParamGroup, Td3Config};
use cq_core::rng::seeded;
use rand::Rng as _;

fn random_matrix(rows: usize, cols: usize, rng: &mut cq_core::rng::Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

#[test]
fn critic_gradient_matches_finite_differences() {
    let cfg = Td3Config {
        critic_hidden: 7,
        n: 3,
        k: 3,
        beta_tr: 0.3,
        beta_sh: 0.2,
        ..Td3Config::default()
    };
    for kind in AgentKind::ALL {
        let mut rng = seeded(11);
        let mut net = build_critic(kind, &cfg, 4).unwrap();
        net.init_uniform(&mut rng);
        let x = random_matrix(6, 4, &mut rng);
        let y = random_matrix(6, net.output_dim(), &mut rng);
        let (grad, _) = critic_gradient(&net, kind, &cfg, &x, &y).unwrap();
        let groups = net.params.layout().group_map();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..net.params.len() {
            let objective = |net: &cq_core::deep::Net| {
                let (mse, ent) = critic_objectives(net, kind, &cfg, &x, &y).unwrap();
                match groups[i] {
                    ParamGroup::TruncHeads => mse + cfg.beta_tr * ent,
                    ParamGroup::ShiftHeads => mse - cfg.beta_sh * ent,
                    _ => mse,
                }
            };
            let mut plus = net.clone();
            plus.params.values_mut()[i] += h;
            let mut minus = net.clone();
            minus.params.values_mut()[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let g = grad.values()[i];
            if fd.abs() > 1e-7 || g.abs() > 1e-7 {
                worst = worst.max(rel_err(fd, g));
            }
        }
        assert!(worst < 1e-4, "{kind}: worst relative error {worst}");
    }
}

#[test]
fn actor_gradient_matches_finite_differences() {
    let cfg = Td3Config {
        critic_hidden: 6,
        actor_hidden: 5,
        n: 2,
        k: 3,
        ..Td3Config::default()
    };
    for kind in AgentKind::ALL {
        let mut rng = seeded(4);
        let mut critic = build_critic(kind, &cfg, 4).unwrap();
        critic.init_uniform(&mut rng);
        let mut actor = build_actor(&cfg, 2, 2, 1.0).unwrap();
        actor.init_uniform(&mut rng);
        let s = random_matrix(5, 2, &mut rng);
        let grad = actor_gradient(&actor, &critic, kind, &cfg, &s).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..actor.params.len() {
            let mut plus = actor.clone();
            plus.params.values_mut()[i] += h;
            let mut minus = actor.clone();
            minus.params.values_mut()[i] -= h;
            let fd = -(actor_objective(&plus, &critic, kind, &cfg, &s).unwrap()
                - actor_objective(&minus, &critic, kind, &cfg, &s).unwrap())
                / (2.0 * h);
            let g = grad.values()[i];
            if fd.abs() > 1e-7 || g.abs() > 1e-7 {
                worst = worst.max(rel_err(fd, g));
            }
        }
        assert!(worst < 1e-4, "{kind}: worst relative error {worst}");
    }
}

mod common;

use common::*;
use irgroup::kkt::stationarity_residual;
use irgroup::prox::{log_prox_objective, prox_capped_log_group, prox_capped_log_scalar, prox_log_scalar};
use irgroup::subproblem::build_subproblem;
use irgroup::{
    constraint_gradient, constraint_value, group_norms, group_soft_threshold, min_norm_solution, objective_value,
    project_ball, retract, validate_partition, weights, Bregman, CappedLogSpec, ConcaveFn, GroupPartition,
    PartitionViolation, Problem, SquaredEuclidean,
};
use ndarray::{Array1, ArrayView1};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn vec_strategy(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..=max_len)
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Random problem with `m × n` Gaussian data, blocks of `block` and σ at half
/// the constraint value of the origin.
fn random_problem(seed: u64, m: usize, n: usize, block: usize, phi: ConcaveFn) -> Problem {
    let mut r = rng(seed);
    let a = randn_matrix(&mut r, m, n);
    let b = randn_vector(&mut r, m);
    let upper: f64 = b.iter().map(|&v| phi.eval(v * v)).sum();
    let partition = GroupPartition::contiguous(n, block).unwrap();
    Problem::new(a, b, 0.5 * upper, partition, ConcaveFn::Log { eps: 0.1 }, phi).unwrap()
}

fn loss_strategy() -> impl Strategy<Value = ConcaveFn> {
    prop_oneof![
        Just(ConcaveFn::Identity),
        (0.01f64..1.0).prop_map(|delta| ConcaveFn::Cauchy { delta }),
    ]
}

proptest! {
    #[test]
    fn soft_threshold_shrinks_norm_and_keeps_direction(v in vec_strategy(6), t in 0.0f64..20.0) {
        let v = Array1::from(v);
        let out = group_soft_threshold(v.view(), t);
        let (nv, no) = (norm(v.view()), norm(out.view()));
        prop_assert!((no - (nv - t).max(0.0)).abs() <= 1e-12 * nv.max(1.0));
        if no > 0.0 {
            prop_assert!((&out / no - &v / nv).iter().all(|d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn ball_projection_is_nonexpansive(v in vec_strategy(5), w in vec_strategy(5), radius in 0.01f64..10.0) {
        let len = v.len().min(w.len());
        let v = Array1::from(v[..len].to_vec());
        let w = Array1::from(w[..len].to_vec());
        let pv = project_ball(v.view(), radius);
        let pw = project_ball(w.view(), radius);
        prop_assert!(norm(pv.view()) <= radius * (1.0 + 1e-15));
        prop_assert!((project_ball(pv.view(), radius) - &pv).iter().all(|d| d.abs() <= 1e-15 * radius));
        prop_assert!(norm((&pv - &pw).view()) <= norm((&v - &w).view()) * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn log_prox_beats_sampled_points(t in 0.0f64..10.0, lambda in 1e-3f64..5.0, eps in 1e-3f64..2.0, us in prop::collection::vec(0.0f64..12.0, 20)) {
        let p = prox_log_scalar(t, lambda, eps);
        let best = log_prox_objective(p, t, lambda, eps);
        for u in us {
            prop_assert!(best <= log_prox_objective(u, t, lambda, eps) + 1e-12);
        }
    }

    #[test]
    fn log_prox_is_monotone_in_t(t in 0.0f64..10.0, dt in 0.0f64..2.0, lambda in 1e-3f64..5.0, eps in 1e-3f64..2.0) {
        prop_assert!(prox_log_scalar(t, lambda, eps) <= prox_log_scalar(t + dt, lambda, eps) + 1e-12);
    }

    #[test]
    fn capped_prox_beats_sampled_points(t in 0.0f64..10.0, lambda in 1e-3f64..5.0, eps in 1e-2f64..1.0, cap in 0.1f64..4.0, us in prop::collection::vec(0.0f64..12.0, 20)) {
        let spec = CappedLogSpec::new(eps, cap).unwrap();
        let p = prox_capped_log_scalar(t, lambda, &spec);
        let best = spec.prox_objective(p, t, lambda);
        for u in us.into_iter().chain([t, spec.nu]) {
            prop_assert!(best <= spec.prox_objective(u, t, lambda) + 1e-12);
        }
    }

    #[test]
    fn capped_group_prox_is_radial(x in vec_strategy(4), lambda in 1e-3f64..5.0, eps in 1e-2f64..1.0, cap in 0.1f64..4.0) {
        let spec = CappedLogSpec::new(eps, cap).unwrap();
        let x = Array1::from(x);
        let out = prox_capped_log_group(x.view(), lambda, &spec);
        let (nx, no) = (norm(x.view()), norm(out.view()));
        prop_assert!((no - prox_capped_log_scalar(nx, lambda, &spec)).abs() <= 1e-12 * nx.max(1.0));
        if no > 0.0 {
            prop_assert!((&out / no - &x / nx).iter().all(|d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn separable_prox_beats_sampled_vectors(seed in any::<u64>(), lambda in 1e-2f64..2.0, cap in 0.2f64..3.0) {
        // The group-wise prox of Σψ(‖x_G‖) over {0,1},{2,3} against random trial points.
        let spec = CappedLogSpec::new(0.1, cap).unwrap();
        let mut r = rng(seed);
        let x = randn_vector(&mut r, 4) * 2.0;
        let part = GroupPartition::contiguous(4, 2).unwrap();
        let mut out = Array1::zeros(4);
        for g in part.groups() {
            let xg = Array1::from_iter(g.iter().map(|&j| x[j]));
            let pg = prox_capped_log_group(xg.view(), lambda, &spec);
            for (k, &j) in g.iter().enumerate() {
                out[j] = pg[k];
            }
        }
        let objective = |y: &Array1<f64>| {
            let d = y - &x;
            0.5 * d.dot(&d) + lambda * group_norms(y.view(), &part).iter().map(|&t| spec.eval(t)).sum::<f64>()
        };
        let best = objective(&out);
        for _ in 0..200 {
            let y = &x + &(randn_vector(&mut r, 4) * r.gen_range(0.0..2.0));
            prop_assert!(best <= objective(&y) + 1e-8);
        }
        prop_assert!(best <= objective(&Array1::zeros(4)) + 1e-8);
    }

    #[test]
    fn group_norms_match_scalar_loop(seed in any::<u64>(), block in 1usize..4) {
        let mut r = rng(seed);
        let n = 12 * block;
        let x = randn_vector(&mut r, n);
        let part = GroupPartition::contiguous(n, block).unwrap();
        let norms = group_norms(x.view(), &part);
        for (i, g) in part.groups().iter().enumerate() {
            let mut acc = 0.0f64;
            for &j in g {
                acc = acc.hypot(x[j]);
            }
            prop_assert!((norms[i] - acc).abs() <= 1e-14 * acc.max(1e-300));
        }
    }

    #[test]
    fn objective_and_constraint_match_naive_loops(seed in any::<u64>(), phi in loss_strategy()) {
        let prob = random_problem(seed, 6, 12, 2, phi);
        let mut r = rng(seed ^ 0xabc);
        let x = randn_vector(&mut r, 12);
        let mut obj = 0.0;
        for g in prob.partition().groups() {
            let t = g.iter().map(|&j| x[j] * x[j]).sum::<f64>().sqrt();
            obj += (1.0 + t / 0.1).ln();
        }
        let mut cons = 0.0;
        for i in 0..6 {
            let mut y = -prob.b()[i];
            for j in 0..12 {
                y += prob.a()[[i, j]] * x[j];
            }
            cons += phi.eval(y * y);
        }
        prop_assert!((objective_value(x.view(), &prob) - obj).abs() <= 1e-12 * obj.abs());
        prop_assert!((constraint_value(x.view(), &prob) - cons).abs() <= 1e-12 * cons.abs());
    }

    #[test]
    fn weights_positive_and_nonincreasing(seed in any::<u64>()) {
        let prob = random_problem(seed, 4, 10, 1, ConcaveFn::Identity);
        let mut r = rng(seed);
        let x = randn_vector(&mut r, 10);
        let w = weights(x.view(), &prob);
        let norms = group_norms(x.view(), prob.partition());
        prop_assert!(w.iter().all(|&v| v > 0.0));
        for i in 0..10 {
            for j in 0..10 {
                if norms[i] < norms[j] {
                    prop_assert!(w[i] >= w[j]);
                }
            }
        }
    }

    #[test]
    fn min_norm_solution_is_least_norm(seed in any::<u64>(), m in 1usize..8, extra in 0usize..8) {
        let n = m + extra;
        let mut r = rng(seed);
        let a = randn_matrix(&mut r, m, n);
        let b = randn_vector(&mut r, m);
        let x0 = min_norm_solution(a.view(), b.view()).unwrap();
        let nb = norm(b.view());
        prop_assert!(norm((a.dot(&x0) - &b).view()) <= 1e-10 * (1.0 + nb));
        let reference = least_norm_normal_equations(&a, &b);
        prop_assert!(norm((&x0 - &reference).view()) <= 1e-8 * (1.0 + norm(reference.view())));
        // Adding a null-space direction never shortens the solution.
        let p = randn_vector(&mut r, n);
        let null = &p - &min_norm_solution(a.view(), a.dot(&p).view()).unwrap();
        let other = &x0 + &null;
        prop_assert!(norm((a.dot(&other) - &b).view()) <= 1e-8 * (1.0 + nb));
        prop_assert!(norm(x0.view()) <= norm(other.view()) + 1e-12);
    }

    #[test]
    fn retraction_lands_in_the_subproblem_set(seed in any::<u64>(), phi in loss_strategy(), scale in 0.0f64..5.0) {
        let prob = random_problem(seed, 5, 12, 2, phi);
        let mut r = rng(seed ^ 1);
        let x0 = prob.slater_point().to_owned();
        let anchor = retract(
            (&x0 + &(randn_vector(&mut r, 12) * 0.3)).view(),
            &build_subproblem(&prob, x0.view()).unwrap(),
        );
        prop_assert!(constraint_value(anchor.view(), &prob) <= prob.sigma() + 1e-10);
        let sub = build_subproblem(&prob, anchor.view()).unwrap();
        prop_assert!(sub.sigma_k > 0.0 && sub.sigma_k <= prob.sigma());
        let fit = sub.residual(anchor.view());
        prop_assert!(fit.dot(&fit) <= sub.sigma_k * (1.0 + 1e-12));

        let x = &anchor + &(randn_vector(&mut r, 12) * scale);
        let out = retract(x.view(), &sub);
        let res = sub.residual(out.view());
        let before = sub.residual(x.view());
        prop_assert!(res.dot(&res) <= sub.sigma_k);
        if before.dot(&before) > sub.sigma_k {
            prop_assert!((res.dot(&res) / sub.sigma_k - 1.0).abs() <= 1e-10);
        } else {
            prop_assert_eq!(out.clone(), x.clone());
        }
        prop_assert!(constraint_value(out.view(), &prob) <= prob.sigma() + 1e-10);
    }

    #[test]
    fn squared_stationarity_is_convex_in_lambda(seed in any::<u64>(), l1 in 0.0f64..50.0, l2 in 0.0f64..50.0, phi in loss_strategy()) {
        let prob = random_problem(seed, 4, 8, 2, phi);
        let mut r = rng(seed);
        let mut x = randn_vector(&mut r, 8);
        x[0] = 0.0;
        x[1] = 0.0;
        let f = |l: f64| stationarity_residual(x.view(), l, &prob).powi(2);
        let mid = f(0.5 * (l1 + l2));
        prop_assert!(mid <= 0.5 * (f(l1) + f(l2)) * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn stationarity_matches_per_group_oracle(seed in any::<u64>(), lambda in 0.0f64..5.0, block in 1usize..3, phi in loss_strategy()) {
        let n = 2 * block;
        let prob = random_problem(seed, 2, n, block, phi);
        let mut r = rng(seed ^ 7);
        let mut x = randn_vector(&mut r, n);
        if r.gen_bool(0.5) {
            for j in 0..block {
                x[j] = 0.0;
            }
        }
        let w = weights(x.view(), &prob);
        let g = constraint_gradient(x.view(), &prob);
        let mut total = 0.0;
        for (i, grp) in prob.partition().groups().iter().enumerate() {
            let c: Vec<f64> = grp.iter().map(|&j| 2.0 * lambda * g[j]).collect();
            let t = grp.iter().map(|&j| x[j] * x[j]).sum::<f64>().sqrt();
            let d = if t == 0.0 {
                ball_distance_oracle(&c, w[i])
            } else {
                grp.iter().zip(&c).map(|(&j, ci)| (w[i] * x[j] / t + ci).powi(2)).sum::<f64>().sqrt()
            };
            total += d * d;
        }
        let got = stationarity_residual(x.view(), lambda, &prob);
        prop_assert!((got - total.sqrt()).abs() <= 1e-8 * (1.0 + got), "{} vs {}", got, total.sqrt());
    }

    #[test]
    fn random_partitions_validate(seed in any::<u64>(), n in 1usize..30) {
        let mut r = rng(seed);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut r);
        let mut groups = Vec::new();
        let mut rest = &idx[..];
        while !rest.is_empty() {
            let k = r.gen_range(1..=rest.len());
            groups.push(rest[..k].to_vec());
            rest = &rest[k..];
        }
        prop_assert!(validate_partition(&groups, n).is_ok());

        let mut dup = groups.clone();
        dup.push(vec![idx[0]]);
        prop_assert_eq!(validate_partition(&dup, n), Err(PartitionViolation::Duplicate { index: idx[0] }));

        let mut short = groups.clone();
        let last = short.last_mut().unwrap();
        let dropped = last.pop().unwrap();
        if last.is_empty() {
            short.pop();
        }
        if !short.is_empty() {
            prop_assert_eq!(validate_partition(&short, n), Err(PartitionViolation::Uncovered { indices: vec![dropped] }));
        }
    }

    #[test]
    fn squared_euclidean_bregman(x in vec_strategy(5), y in vec_strategy(5)) {
        let len = x.len().min(y.len());
        let x = Array1::from(x[..len].to_vec());
        let y = Array1::from(y[..len].to_vec());
        let f = SquaredEuclidean;
        let d = f.distance(x.view(), y.view());
        prop_assert!(d >= 0.0);
        let zero = Array1::zeros(len);
        prop_assert_eq!(f.distance(x.view(), zero.view()), x.dot(&x));
    }
}

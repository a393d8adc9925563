// pilot 2: per-trial paired final information + wc totals, 10 seeds
use nalgebra::{DMatrix, DVector};
use rrl_core::conic::SolveOptions;
use rrl_core::estimation::Dataset;
use rrl_core::rng::NoiseStreams;
use rrl_core::rrl::{receding_horizon_run, Planner, RrlConfig};
use rrl_core::simulation::{rollout, CostSpec, EpochSchedule, LinearSystem, Policy};

fn main() {
    let a = DMatrix::from_row_slice(3, 3, &[1.1, 0.5, 0.0, 0.0, 0.9, 0.1, 0.0, -0.2, 0.8]);
    let b = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.1, 0.0, 0.0, 2.0]);
    let sys = LinearSystem::new(a, b, 0.5).unwrap();
    let q = DMatrix::identity(3, 3);
    let r = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 1.0]));

    let trials = 10u64;
    println!("trial |    info: nom    rrl greedy |  wc_data: nom     rrl   greedy");
    let mut finals = vec![vec![]; 3];
    let mut wcds = vec![vec![]; 3];
    for trial in 0..trials {
        let mut row_info = vec![];
        let mut row_wcd = vec![];
        for planner in [Planner::Nom, Planner::Rrl, Planner::Greedy] {
            let mut streams = NoiseStreams::from_master(1234, trial);
            let probe_policy = Policy::new(DMatrix::zeros(2, 3), DMatrix::identity(2, 2)).unwrap();
            let mut data = Dataset::new();
            for _ in 0..500 {
                let t = rollout(&sys, &probe_policy, &DVector::zeros(3), 6, &mut streams).unwrap();
                data.push_trajectory(&t);
            }
            let cfg = RrlConfig {
                schedule: EpochSchedule::uniform(1000, 10).unwrap(),
                horizon: 10,
                delta: 0.05,
                cost: CostSpec::new(q.clone(), r.clone()).unwrap(),
                sigma_w: 0.5,
                solve_opts: SolveOptions::default(),
            };
            let res = receding_horizon_run(&sys, &data, &cfg, &mut streams, planner, 1234, trial).unwrap();
            row_info.push(*res.information.last().unwrap());
            row_wcd.push(res.wc_cost_data.iter().map(|v| v.unwrap()).sum::<f64>());
        }
        println!("{trial:>5} | {:>8.1} {:>6.1} {:>6.1} | {:>12.1} {:>7.1} {:>8.1}",
            row_info[0], row_info[1], row_info[2], row_wcd[0], row_wcd[1], row_wcd[2]);
        for i in 0..3 { finals[i].push(row_info[i]); wcds[i].push(row_wcd[i]); }
    }
    let med = |v: &mut Vec<f64>| { v.sort_by(|a,b| a.partial_cmp(b).unwrap());
        if v.len() % 2 == 0 { (v[v.len()/2-1]+v[v.len()/2])/2.0 } else { v[v.len()/2] } };
    println!("medians info: nom {:.1} rrl {:.1} greedy {:.1}",
        med(&mut finals[0].clone()), med(&mut finals[1].clone()), med(&mut finals[2].clone()));
    println!("medians wc_data: nom {:.1} rrl {:.1} greedy {:.1}",
        med(&mut wcds[0].clone()), med(&mut wcds[1].clone()), med(&mut wcds[2].clone()));
}

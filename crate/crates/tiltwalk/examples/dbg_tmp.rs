use tiltwalk::engine::{self, centered_tube, PathConstraint};
use tiltwalk::laws::IncrementLaw;
use tiltwalk::schedule::StepSchedule;

fn main() {
    let asym = IncrementLaw::validate(&[-1.0, 0.0, 1.0, 2.0], &[0.4, 0.25, 0.3, 0.05], true).unwrap();
    for n in [2usize, 3, 4] {
        let sched = StepSchedule::homogeneous(asym.clone(), n).unwrap();
        let tube = centered_tube(&sched, 0.0, 4.0);
        let dist = engine::endpoint_distribution(0, &sched, &tube).unwrap();
        let bf4 = engine::brute_force_prob(0, &sched, &tube.clone().with_endpoint(4)).unwrap();
        println!("n={n}: window=[{}..{}] p(4)={:e} brute={:e}", dist.offset(),
                 dist.offset() + dist.mass().len() as i64 - 1, dist.prob_at(4), bf4);
    }
    let _ = PathConstraint::unconstrained();
}

//! Built-in objectives, the gradient checker, and the PŁ / strong-convexity
//! verifiers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ptflow::objectives::{
    check_gradient, verify_pl, verify_strong_convexity, BoxDomain, Objective,
};

fn main() -> ptflow::Result<()> {
    let objectives = [
        Objective::trid(2)?,
        Objective::trid(6)?,
        Objective::rosenbrock(2)?,
        Objective::quadratic(&[vec![1.0, 0.0], vec![0.0, 4.0]], &[1.0, -2.0])?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for obj in &objectives {
        let domain = BoxDomain::cube(obj.dim(), -5.0, 5.0)?;
        let worst = (0..100)
            .map(|_| check_gradient(obj, &domain.sample(&mut rng), 1e-3))
            .collect::<ptflow::Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        println!(
            "{:<10} n={:<2} x* = {:?}  f* = {:?}  max grad error = {worst:.2e}",
            obj.name(),
            obj.dim(),
            obj.minimizer().unwrap(),
            obj.min_value().unwrap()
        );
    }

    let quad = Objective::quadratic(&[vec![1.0, 0.0], vec![0.0, 4.0]], &[0.0, 0.0])?;
    let square = BoxDomain::cube(2, -1.0, 1.0)?;
    let pl = verify_pl(&quad, &square, 51, Some(1.0))?;
    println!(
        "quadratic diag(1,4): sigma_hat = {:.6} ({} violations of sigma = 1)",
        pl.sigma_hat,
        pl.violations.len()
    );

    let bad = verify_strong_convexity(&quad, &square, 100, 4.5, &mut rng)?;
    println!(
        "mu = 4.5 fails on {} of 100 random pairs, e.g. {:?}",
        bad.len(),
        bad.first()
    );

    let rosen = Objective::rosenbrock(2)?;
    let pl = verify_pl(&rosen, &square, 101, None)?;
    println!(
        "rosenbrock on [-1,1]^2: sigma_hat = {:.4} at {:?} (reported modulus {})",
        pl.sigma_hat,
        pl.argmin.unwrap(),
        rosen.pl_modulus().unwrap().sigma
    );
    Ok(())
}

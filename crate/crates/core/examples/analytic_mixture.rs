// The mixture recursion toward the retain distribution, its closed form,
// and the limit of the KL divergence to the forget distribution.

use collapse_unlearn::distributions::{kl_divergence, total_variation, Categorical};
use collapse_unlearn::relearn::{analytic_mixture_step, closed_form_pt};

pub fn run_example() -> collapse_unlearn::Result<()> {
    let p0 = Categorical::new(vec![0.1, 0.2, 0.7])?;
    let pr = Categorical::new(vec![0.6, 0.3, 0.1])?;
    let pf = Categorical::new(vec![0.2, 0.2, 0.6])?;
    let alpha = 0.5;

    let mut p = p0.clone();
    let mut prev_tv = total_variation(&p, &pr)?;
    for t in 1..=200u32 {
        p = analytic_mixture_step(&p, &pr, alpha)?;
        let tv = total_variation(&p, &pr)?;
        if [1, 2, 5, 10, 50, 200].contains(&t) {
            let gap = total_variation(&p, &closed_form_pt(&p0, &pr, alpha, t)?)?;
            println!(
                "t={t:>3} TV to retain {tv:.3e} (ratio {:.6}), closed-form gap {gap:.1e}, KL to forget {:.9}",
                tv / prev_tv,
                kl_divergence(&p, &pf)?
            );
        }
        prev_tv = tv;
    }
    println!("limit KL(p_r || p_f) = {:.9}", kl_divergence(&pr, &pf)?);
    Ok(())
}

fn main() -> collapse_unlearn::Result<()> {
    run_example()
}

// ROUGE-L recall and the unlearning reward on a few answer pairs.

use collapse_unlearn::textreward::{lcs_length, rouge_l_recall, unlearn_reward, TokenSequence};

pub fn run_example() -> collapse_unlearn::Result<()> {
    let truth = TokenSequence::tokenize("The dog sat.");
    for cand in ["the cat sat", "The dog sat!", "a bird flew", "sat dog the"] {
        let c = TokenSequence::tokenize(cand);
        println!(
            "{cand:>14}: lcs {} recall {:.4} reward {:.4}",
            lcs_length(&c, &truth),
            rouge_l_recall(&c, &truth)?,
            unlearn_reward(&c, &truth)?
        );
    }
    assert_eq!(rouge_l_recall(&TokenSequence::tokenize("the cat sat"), &truth)?, 2.0 / 3.0);
    Ok(())
}

fn main() -> collapse_unlearn::Result<()> {
    run_example()
}

//! Walk through the composite loss on hand-built predictions: the weighted
//! classification term, the layout penalty, the structural term, and how the
//! class weights react to a confusion matrix.
//!
//!     cargo run --example loss_breakdown

use lpsr::alphabet::{Alphabet, NUM_CLASSES, PLATE_LEN};
use lpsr::image::ImageTensor;
use lpsr::loss::{
    classification_loss, dissimilarity_loss, layout_penalty, lcofl, update_penalty_weights,
    ClassProbabilities, ConfusionMatrix, ConfusionRule, PenaltyMode, PenaltyWeights, SsimParams,
};

fn main() -> lpsr::Result<()> {
    let alphabet = Alphabet;
    // Ground truth "ABC1D23" as class indices.
    let mut gt = [0usize; PLATE_LEN];
    for (i, c) in "ABC1D23".chars().enumerate() {
        gt[i] = alphabet.class_of(c)?;
    }
    let weights = PenaltyWeights::new(10.0);

    // A clueless OCR assigns uniform probability everywhere; the weighted
    // cross-entropy collapses to ln 36 regardless of the ground truth.
    let uniform = ClassProbabilities::uniform();
    let l_c = classification_loss(&uniform, &gt, &weights)?;
    println!("uniform prediction: L_C = {l_c:.6} (ln 36 = {:.6})", (NUM_CLASSES as f64).ln());

    // A perfect prediction costs nothing.
    let perfect = ClassProbabilities::one_hot(&gt);
    println!("perfect prediction: L_C = {:.6}", classification_loss(&perfect, &gt, &weights)?);

    // Swap the digit '1' for the letter 'I': one layout violation.
    let mut wrong = gt;
    wrong[3] = alphabet.class_of('I')?;
    let confused = ClassProbabilities::one_hot(&wrong);
    let hard = layout_penalty(&confused, &gt, 0.2, PenaltyMode::Hard)?;
    let soft = layout_penalty(&confused, &gt, 0.2, PenaltyMode::Soft)?;
    println!("digit->letter swap: L_P hard = {hard:.4}, soft = {soft:.4}");

    // Structural term between an image and a noisy copy of itself.
    let ssim = SsimParams::default();
    let hr = ImageTensor::from_fn(32, 96, |y, x| {
        let v = ((x + y) % 7) as f32 / 7.0;
        [v, v, v]
    });
    let mut sr = hr.clone();
    for y in 0..sr.height {
        for x in (0..sr.width).step_by(3) {
            let p = sr.pixel(y, x);
            sr.set_pixel(y, x, [p[0] * 0.5, p[1] * 0.5, p[2] * 0.5]);
        }
    }
    println!("noisy copy: L_S = {:.6}", dissimilarity_loss(&sr, &hr, &ssim)?);

    // The composite loss sums the three terms.
    let label = lpsr::alphabet::LpLabel::new("ABC1D23", lpsr::alphabet::LayoutId::Mercosur)?;
    let v = lcofl(&confused, &label, &sr, &hr, &weights, &alphabet, 0.2, &ssim)?;
    println!(
        "composite: L_C {:.4} + L_P {:.4} + L_S {:.4} = {:.4}",
        v.l_c, v.l_p, v.l_s, v.total
    );

    // Repeated S->5 confusions during validation raise the weight of 'S'
    // only; everything else stays put until it hits the cap.
    let s = alphabet.class_of('S')?;
    let five = alphabet.class_of('5')?;
    let mut cm = ConfusionMatrix::new();
    for _ in 0..10 {
        cm.record(s, five);
    }
    let rule = ConfusionRule::default();
    let mut w = weights.clone();
    for step in 0..3 {
        w = update_penalty_weights(&w, &cm, 0.5, &rule);
        println!("after update {}: w['S'] = {:.2}, w['A'] = {:.2}", step + 1, w.get(s), w.get(0));
    }
    Ok(())
}

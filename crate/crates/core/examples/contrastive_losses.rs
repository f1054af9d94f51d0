//! Evaluate the clip-keyword and video-keyword losses on a random batch and
//! show how the video pooling option changes nothing.

use vcka::losses::{
    clip_keyword_loss, keyword_loss, random_batch, total_loss, video_keyword_loss_with,
    LossOptions, VideoPooling, DEFAULT_LAMBDA_KW,
};

fn main() -> vcka::Result<()> {
    let batch = random_batch(3, 4, 8, 5, 16);
    let ck = clip_keyword_loss(&batch)?;
    let masked = video_keyword_loss_with(&batch, LossOptions::default())?;
    let zero_fill = video_keyword_loss_with(
        &batch,
        LossOptions {
            pooling: VideoPooling::ZeroFillMean,
            ..LossOptions::default()
        },
    )?;
    let kw = keyword_loss(&batch)?;

    println!("L_ck            {:.6}", ck.value);
    println!("L_vk (masked)   {:.6}", masked.value);
    println!("L_vk (zero-fill){:.6}", zero_fill.value);
    println!("L_kw            {:.6}", kw.value);
    println!(
        "total with L_mr=1.2, L_hd=0.4: {:.6}",
        total_loss(1.2, 0.4, kw.value, DEFAULT_LAMBDA_KW)
    );
    let grad_norm: f64 = kw
        .grad_clips
        .iter()
        .flat_map(|m| m.as_slice())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    println!("|dL_kw/dclips| = {grad_norm:.4}");
    Ok(())
}

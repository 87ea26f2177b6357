//! Word error rate and top-1 error on a few hand-written examples.

use toltiers::domain::{top1_error, wer_text};

fn main() -> toltiers::Result<()> {
    let pairs = [
        ("the cat sat on the mat", "the cat sat on the mat"),
        ("the cat sat on the mat", "the cat sat on mat"),
        ("the cat sat", "a cat sat down"),
        ("a b", "a b c d"),
    ];
    for (reference, hypothesis) in pairs {
        println!("{:.4}  {reference:?} -> {hypothesis:?}", wer_text(reference, hypothesis)?);
    }
    println!("top-1 error: {} {}", top1_error("tabby", "tabby"), top1_error("tabby", "lynx"));
    Ok(())
}

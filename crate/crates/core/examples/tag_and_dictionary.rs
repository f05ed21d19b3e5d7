//! Tag free-text queries with the bundled lexicon and count primitive words per class.
//!
//!     cargo run --example tag_and_dictionary

use salrank::tagger::{build_dictionary, tag_query, Lexicon, Tag};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lex = Lexicon::bundled();
    let texts = [
        "A person slowly opens the wooden door of the kitchen.",
        "person quickly closes the red door in the hallway",
        "The man carefully puts a small cup on the table",
        "someone washes the dishes at the sink",
    ];
    let mut queries = Vec::new();
    for (i, t) in texts.iter().enumerate() {
        let q = tag_query(format!("q{i}"), t, &lex)?;
        let shown: Vec<String> = q.tokens.iter().zip(&q.tags).map(|(w, c)| format!("{w}/{c}")).collect();
        println!("{}  subject={:?}", shown.join(" "), q.subject_index);
        queries.push(q);
    }

    let dict = build_dictionary(&queries, "train")?;
    println!();
    for class in Tag::PRIMITIVES {
        let words: Vec<String> = dict.words(class).iter().map(|(w, n)| format!("{w}({n})")).collect();
        println!("{:<5} {}", class.as_str(), words.join(" "));
    }
    Ok(())
}

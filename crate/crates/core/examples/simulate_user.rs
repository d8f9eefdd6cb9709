//! Generates the synthetic world and one user, then builds the training
//! caches of the supervision conditions that need no baseline model.

use rnnt_personalize::sim::{build_condition, Manifest, SupervisionTag, SynthWorld, WorldConfig};

fn main() -> anyhow::Result<()> {
    let world = SynthWorld::new(WorldConfig::default(), 1)?;
    println!(
        "world: {} words, {} base speakers, {} train / {} test sentences",
        world.vocabulary.len(),
        world.speakers.len(),
        world.base_train.len(),
        world.base_test.len()
    );
    println!("  e.g. {:?}", world.base_train[0].transcript);

    let user = world.user(0);
    println!("user {} names {:?}", user.speaker.id, user.names);
    println!("  {} train sentences, e.g. {:?}", user.train.len(), user.train[0].transcript);
    println!("  {} test sentences, e.g. {:?}", user.test.len(), user.test[0].transcript);

    for tag in [SupervisionTag::TtsNames, SupervisionTag::TtsSentences, SupervisionTag::Supervised] {
        let cache = build_condition(tag, &world, &user, None, None, 1)?;
        let snapshot = cache.snapshot();
        let frames: usize = snapshot.entries().iter().map(|e| e.features.rows()).sum();
        let first = &snapshot.entries()[0];
        println!("{tag:>14}: {} examples, {frames} frames; first {:?} ({})", snapshot.len(), first.transcript, first.source);
        if tag == SupervisionTag::TtsNames {
            let manifest = Manifest::for_condition(&user, tag, &cache);
            println!("  manifest entry: {}", serde_json::to_string(&manifest.entries[0])?);
        }
    }
    Ok(())
}

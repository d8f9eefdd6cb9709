//! The on-device training cache: appends keep order, snapshots are frozen
//! views, and a full cache evicts its oldest entries.

use rnnt_personalize::grad::Tensor;
use rnnt_personalize::trainer::TrainingCache;

fn main() -> anyhow::Result<()> {
    let mut cache = TrainingCache::new(3)?;
    cache.append("u0", Tensor::zeros(&[6, 8]), "call ada", "supervised")?;
    cache.append("u1", Tensor::zeros(&[9, 8]), "Text Ada, please!", "supervised")?;
    let before = cache.snapshot();

    for k in 2..5 {
        if let Some(evicted) = cache.append(format!("u{k}"), Tensor::zeros(&[6, 8]), "ok", "tts_names")? {
            println!("appending u{k} evicted {evicted}");
        }
    }
    println!("snapshot taken earlier: {:?}", before.ids());
    println!("current contents:       {:?} ({} evicted)", cache.snapshot().ids(), cache.evicted());
    let e = &before.entries()[1];
    println!("stored transcript {:?} as labels {:?}", e.transcript, e.labels);
    Ok(())
}

//! Embed texts through the on-disk cache, show that a second pass never
//! reaches the provider, then project the vectors with PCA.

use driforge::embedding::{cosine, embed_batch, pca, BatchOptions, EmbeddingCache, EmbeddingProvider, MockEmbedder};

fn main() -> driforge::Result<()> {
    let texts: Vec<String> = [
        "Die Krankenkassenprämien steigen erneut stärker als die Löhne.",
        "Les primes d'assurance maladie augmentent plus vite que les salaires.",
        "Der Kanton plant zwei Spitalstandorte zusammenzulegen.",
        "Die Prämien steigen erneut stärker als die Löhne.",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("mock.emb");
    let provider = MockEmbedder::new(256);
    let opts = BatchOptions { batch_size: 2, ..BatchOptions::default() };

    let cache = EmbeddingCache::open(&path, provider.provider_id(), provider.model_id(), provider.dim())?;
    let vectors = embed_batch(&texts, &provider, &cache, &opts)?;
    println!("first pass: {} provider calls, {} cached", provider.calls(), cache.len());

    let reopened = EmbeddingCache::open(&path, provider.provider_id(), provider.model_id(), provider.dim())?;
    let again = embed_batch(&texts, &provider, &reopened, &opts)?;
    println!("second pass from disk: still {} provider calls", provider.calls());
    assert_eq!(vectors, again);

    for j in 1..texts.len() {
        println!("cos(0, {j}) = {:.3}", cosine(&vectors[0], &vectors[j])?);
    }

    let projected = pca(&vectors, 2)?;
    for (t, v) in texts.iter().zip(&projected) {
        println!("{:>8.3} {:>8.3}  {:.40}", v.values()[0], v.values()[1], t);
    }
    Ok(())
}

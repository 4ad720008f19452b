use qagen::retrieval::toy::{toy_corpus, ToyConfig};
use qagen::retrieval::{evaluate_topk, train_adapter, AdapterModel, TrainConfig};

#[test]
fn training_separates_rotated_signal() {
    let toy = toy_corpus(&ToyConfig::default()).unwrap();
    let ks = [1, 5];
    let base = evaluate_topk(
        &AdapterModel::identity(toy.store.dim(), 0.1),
        &toy.test_queries,
        &toy.store,
        &toy.chunk_ids,
        &ks,
    )
    .unwrap();
    let cfg = TrainConfig { epochs: 10, learning_rate: 1e-2, ..Default::default() };
    let out = train_adapter(&toy.train_pairs, &toy.store, &cfg).unwrap();
    let trained = evaluate_topk(&out.adapter, &toy.test_queries, &toy.store, &toy.chunk_ids, &ks).unwrap();
    eprintln!("{}{}{:?}", base.table("identity"), trained.table("trained"), out.loss_curve);
    assert!(base.top_k_accuracy[&1] <= 0.4);
    assert!(trained.top_k_accuracy[&1] >= 0.9);
    assert!(trained.top_k_accuracy[&1] <= trained.top_k_accuracy[&5]);
}

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hsq_bench::{codebook, gradient, GRADIENT_LEN};
use hsq_core::{hsq, wire, CodebookMethod, SketchPath, SplitMix64, Variant};

fn compress(c: &mut Criterion) {
    let g = gradient(GRADIENT_LEN, 3);
    let mut group = c.benchmark_group("compress");
    group.throughput(Throughput::Elements(GRADIENT_LEN as u64));
    for (dp, m) in [(8, 256), (16, 256), (64, 256)] {
        let cb = codebook(CodebookMethod::RandomGaussian, dp, m);
        for variant in [Variant::Unbiased, Variant::Greedy] {
            let id = BenchmarkId::new(format!("{variant:?}").to_lowercase(), format!("d'={dp} m={m}"));
            group.bench_function(id, |b| {
                let mut rng = SplitMix64::new(7);
                b.iter(|| hsq::compress(black_box(&g), &cb, 63, variant, &mut rng).unwrap())
            });
        }
    }
    group.finish();
}

fn sketch(c: &mut Criterion) {
    let cb = codebook(CodebookMethod::RandomGaussian, 64, 256);
    let seg = gradient(64, 4);
    let mut group = c.benchmark_group("sketch");
    group.bench_function("exact", |b| b.iter(|| cb.correlations(black_box(&seg))));
    for k in [8, 16, 32] {
        let sk = cb.sketch(k, 5, SketchPath::Greedy).unwrap();
        group.bench_with_input(BenchmarkId::new("projected", k), &k, |b, _| {
            b.iter(|| sk.project(black_box(&seg)))
        });
    }
    group.finish();
}

fn wire_codec(c: &mut Criterion) {
    let cb = codebook(CodebookMethod::RandomGaussian, 16, 256);
    let g = gradient(GRADIENT_LEN, 6);
    let cg = hsq::compress(&g, &cb, 63, Variant::Greedy, &mut SplitMix64::new(8)).unwrap();
    let bytes = wire::encode(&cg).unwrap();
    let mut group = c.benchmark_group("wire");
    group.throughput(Throughput::Bytes(bytes.len() as u64));
    group.bench_function("encode", |b| b.iter(|| wire::encode(black_box(&cg)).unwrap()));
    group.bench_function("decode", |b| b.iter(|| wire::decode(black_box(&bytes)).unwrap()));
    group.finish();
}

fn generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("codebook");
    group.sample_size(10);
    for method in CodebookMethod::ALL {
        let m = if method.requires_square() { 16 } else { 256 };
        group.bench_function(method.name(), |b| b.iter(|| codebook(method, 16, m)));
    }
    group.finish();
}

criterion_group!(benches, compress, sketch, wire_codec, generation);
criterion_main!(benches);

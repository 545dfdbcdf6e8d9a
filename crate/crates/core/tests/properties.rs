mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use streamforge::arch::{AcceleratorSpec, InterconnectSpec};
use streamforge::cost::{cn_cost, spatial_utilization};
use streamforge::ga::{crossover, dominates, mutate, non_dominated_sort, nsga2_select, GenomeSpace};
use streamforge::partition::{derive_cn_granularity, split_layer_into_cns, LayerTiling, TileRequest};
use streamforge::rtree::{RTree, Rect};
use streamforge::workload::{parse_workload, Dim, Layer, LayerDims, LayerKind, WorkloadGraph};

fn conv_strategy() -> impl Strategy<Value = Layer> {
    (1u64..6, 1u64..5, 1u64..12, 1u64..12, prop::sample::select(vec![1u64, 2, 3, 5]), 1u64..4, 0u64..3, 0u64..3)
        .prop_map(|(k, c, ox, oy, f, s, pl, ph)| {
            Layer::new(0, LayerKind::Conv, LayerDims::new(k, c, ox, oy, f, f).with_stride(s, s).with_pad(pl, pl, ph, ph))
        })
        .prop_filter("input extent >= 1", |l| l.dims.ix_signed() >= 1 && l.dims.iy_signed() >= 1)
}

fn single_core(unroll: &[(Dim, u64)]) -> AcceleratorSpec {
    AcceleratorSpec {
        name: "one".into(),
        cores: vec![common::core(0, unroll, 1 << 20, 1 << 20, false)],
        interconnect: InterconnectSpec { bus_bw: 64, e_bus: 1.0, dram_bw: 64, e_dram: 10.0 },
    }
}

proptest! {
    #[test]
    fn workload_json_round_trips(seed in any::<u64>()) {
        let g = common::random_workload(&mut ChaCha8Rng::seed_from_u64(seed), 8);
        let back = parse_workload(&g.to_json()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn footprint_is_bounding_box_of_reads(layer in conv_strategy(), ty in 1u64..5, tx in 1u64..5) {
        let tiling = LayerTiling { tile_oy: ty.min(layer.dims.oy), tile_ox: tx.min(layer.dims.ox) };
        let d = layer.dims;
        for cn in split_layer_into_cns(&layer, &tiling, 0) {
            let (ys, xs) = (cn.oy_range(), cn.ox_range());
            let mut bb: Option<[i64; 4]> = None;
            for oy in ys.start..ys.stop {
                for fy in 0..d.fy {
                    let iy = (oy * d.stride_y + fy) as i64 - d.pad_top as i64;
                    if iy < 0 || iy >= d.iy() as i64 { continue; }
                    for ox in xs.start..xs.stop {
                        for fx in 0..d.fx {
                            let ix = (ox * d.stride_x + fx) as i64 - d.pad_left as i64;
                            if ix < 0 || ix >= d.ix() as i64 { continue; }
                            let b = bb.get_or_insert([iy, iy + 1, ix, ix + 1]);
                            b[0] = b[0].min(iy);
                            b[1] = b[1].max(iy + 1);
                            b[2] = b[2].min(ix);
                            b[3] = b[3].max(ix + 1);
                        }
                    }
                }
            }
            let exact = bb.and_then(|b| Rect::new([0, b[0], b[2]], [d.c as i64, b[1], b[3]]));
            if d.stride_y <= d.fy && d.stride_x <= d.fx {
                prop_assert_eq!(cn.in_footprints[0], exact, "CN {}", cn.id);
            } else if let Some(e) = exact {
                // windows with gaps: the interval may also span unread rows
                let fp = cn.in_footprints[0].expect("reads imply a footprint");
                prop_assert!(fp.contains(&e), "CN {}: {} does not contain {}", cn.id, fp, e);
            }
        }
    }

    #[test]
    fn tiles_cover_outputs_exactly_once(layer in conv_strategy(), ty in 1u64..6, tx in 1u64..6) {
        let tiling = LayerTiling { tile_oy: ty.min(layer.dims.oy), tile_ox: tx.min(layer.dims.ox) };
        let cns = split_layer_into_cns(&layer, &tiling, 0);
        let (oy, ox) = (layer.dims.oy as usize, layer.dims.ox as usize);
        let mut hits = vec![0u32; oy * ox];
        for cn in &cns {
            for y in cn.oy_range().start..cn.oy_range().stop {
                for x in cn.ox_range().start..cn.ox_range().stop {
                    hits[y as usize * ox + x as usize] += 1;
                }
            }
        }
        prop_assert!(hits.iter().all(|&h| h == 1));
        prop_assert_eq!(cns.iter().map(|c| c.generated_outputs).sum::<u64>(), layer.output_elements());
        prop_assert_eq!(cns.iter().map(|c| c.discardable_inputs[0]).sum::<u64>(), layer.input_elements());
        prop_assert_eq!(cns.iter().map(|c| c.macs).sum::<u64>(), layer.op_count());
    }

    #[test]
    fn coarser_tiles_never_add_cns(seed in any::<u64>(), a in 1u64..8, b in 1u64..8) {
        let g = common::random_workload(&mut ChaCha8Rng::seed_from_u64(seed), 6);
        let arch = single_core(&[(Dim::K, 8), (Dim::C, 8)]);
        let mut simd = arch.clone();
        simd.cores.push(common::core(1, &[(Dim::K, 8)], 1 << 20, 1 << 20, true));
        let (fine, coarse) = (a.min(b), a.max(b));
        let count = |t| -> usize {
            let gran = derive_cn_granularity(&g, &simd, TileRequest::rows(t)).unwrap();
            g.layers.iter().map(|l| gran.layers[&l.id].cn_count(l)).sum()
        };
        prop_assert!(count(coarse) <= count(fine));
    }

    #[test]
    fn rtree_matches_linear_scan(
        rects in prop::collection::vec((0i64..40, 0i64..40, 1i64..8, 1i64..8), 0..120),
        queries in prop::collection::vec((0i64..48, 0i64..48, 1i64..12, 1i64..12), 1..10),
        max in 4usize..17,
    ) {
        let items: Vec<(Rect<2>, usize)> = rects
            .iter()
            .enumerate()
            .map(|(i, &(x, y, w, h))| (Rect::new([x, y], [x + w, y + h]).unwrap(), i))
            .collect();
        let tree = RTree::bulk_load_with(items.clone(), max, (max * 3 / 8).max(2));
        prop_assert!(tree.check_invariants().is_ok(), "{:?}", tree.check_invariants());
        prop_assert_eq!(tree.len(), items.len());
        for (x, y, w, h) in queries {
            let q = Rect::new([x, y], [x + w, y + h]).unwrap();
            let want: Vec<usize> = items.iter().filter(|(r, _)| r.intersects(&q)).map(|(_, i)| *i).collect();
            prop_assert_eq!(tree.query(&q), want);
        }
    }

    #[test]
    fn ga_operators_keep_genomes_valid(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let choices: Vec<Vec<usize>> = (0..n)
            .map(|i| match i % 3 { 0 => vec![0, 1, 2], 1 => vec![1, 3], _ => vec![0, 2] })
            .collect();
        let space = GenomeSpace { gene_layers: (0..n).collect(), choices, fixed: Default::default() };
        for _ in 0..20 {
            let a = space.random(&mut rng);
            let b = space.random(&mut rng);
            let (mut x, mut y) = crossover(&a, &b, &mut rng);
            mutate(&mut x, &space, &mut rng);
            mutate(&mut y, &space, &mut rng);
            prop_assert!(space.is_valid(&x) && space.is_valid(&y));
        }
    }

    #[test]
    fn first_front_is_mutually_non_dominated(
        objs in prop::collection::vec(prop::collection::vec(0u8..20, 2), 1..40),
        k in 1usize..40,
    ) {
        let objs: Vec<Vec<f64>> = objs.into_iter().map(|v| v.into_iter().map(f64::from).collect()).collect();
        let fronts = non_dominated_sort(&objs);
        prop_assert_eq!(fronts.iter().map(Vec::len).sum::<usize>(), objs.len());
        for &i in &fronts[0] {
            for &j in &fronts[0] {
                prop_assert!(!dominates(&objs[i], &objs[j]));
            }
        }
        for later in &fronts[1..] {
            for &j in later {
                prop_assert!(fronts[0].iter().any(|&i| dominates(&objs[i], &objs[j])));
            }
        }
        let k = k.min(objs.len());
        let mut picked = nsga2_select(&objs, k);
        prop_assert_eq!(picked.len(), k);
        picked.sort();
        picked.dedup();
        prop_assert_eq!(picked.len(), k);
    }

    #[test]
    fn split_energy_is_at_least_whole_layer(layer in conv_strategy(), ty in 1u64..5) {
        prop_assume!(layer.dims.stride_y <= layer.dims.fy && layer.dims.stride_x <= layer.dims.fx);
        let core = common::core(0, &[(Dim::K, 4), (Dim::C, 4)], 1 << 20, 1 << 20, false);
        let whole = &split_layer_into_cns(&layer, &LayerTiling::full(&layer), 0)[0];
        let e_whole = cn_cost(whole, &layer, &core, true).unwrap().energy;
        let tiling = LayerTiling { tile_oy: ty.min(layer.dims.oy), tile_ox: layer.dims.ox };
        let e_split: f64 = split_layer_into_cns(&layer, &tiling, 0)
            .iter()
            .map(|cn| cn_cost(cn, &layer, &core, true).unwrap().energy)
            .sum();
        prop_assert!(e_split >= e_whole * (1.0 - 1e-12));
    }

    #[test]
    fn full_utilization_iff_multiples(k in 1u64..80, c in 1u64..80) {
        let core = common::core(0, &[(Dim::K, 16), (Dim::C, 8)], 1 << 20, 1 << 20, false);
        let layer = Layer::new(0, LayerKind::PointwiseConv, LayerDims::new(k, c, 2, 2, 1, 1));
        let cn = &split_layer_into_cns(&layer, &LayerTiling::full(&layer), 0)[0];
        let u = spatial_utilization(cn, &layer, &core).unwrap();
        prop_assert!(u > 0.0 && u <= 1.0);
        prop_assert_eq!(u == 1.0, k % 16 == 0 && c % 8 == 0);
    }
}

#[test]
fn disjoint_pool_energy_is_additive() {
    let simd = common::core(0, &[(Dim::K, 8)], 1 << 20, 1 << 20, true);
    let pool = Layer::new(0, LayerKind::PoolMax, LayerDims::new(8, 8, 8, 8, 2, 2).with_stride(2, 2));
    let whole = &split_layer_into_cns(&pool, &LayerTiling::full(&pool), 0)[0];
    let e_whole = cn_cost(whole, &pool, &simd, true).unwrap().energy;
    for t in [1, 2, 4] {
        let tiling = LayerTiling { tile_oy: t, tile_ox: 8 };
        let e: f64 =
            split_layer_into_cns(&pool, &tiling, 0).iter().map(|cn| cn_cost(cn, &pool, &simd, true).unwrap().energy).sum();
        assert!((e - e_whole).abs() < 1e-9 * e_whole, "tile {t}: {e} vs {e_whole}");
    }
}

#[test]
fn random_workloads_validate() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let g: WorkloadGraph = common::random_workload(&mut rng, 9);
        assert!(streamforge::workload::validate_graph(&g).is_empty());
    }
}

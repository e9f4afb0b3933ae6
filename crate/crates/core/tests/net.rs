use std::io::{BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread;

use codedpir::algebra::Field;
use codedpir::mds::{encode, Database, Generator, ShareTable};
use codedpir::net::*;
use codedpir::params::derive_params;
use codedpir::plan::{build_plan, Permutations, WireQuery};
use codedpir::protocol::{answer, retrieve, WireAnswer};
use codedpir::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Cluster {
    g: Generator,
    db: Database,
    shares: Vec<ShareTable>,
    addrs: Vec<SocketAddr>,
}

fn cluster(m: usize, n: usize, k: usize) -> Cluster {
    let p = derive_params(m, n, k).unwrap();
    let f = Field::for_servers(n);
    let g = Generator::vandermonde(n, k, f).unwrap();
    let db = Database::random(f, m, k, p.ltilde as usize, &mut ChaCha8Rng::seed_from_u64(77));
    let shares = encode(&db, &g).unwrap();
    let addrs = shares
        .iter()
        .map(|s| {
            let srv = Server::bind(s.clone(), "127.0.0.1:0").unwrap();
            let a = srv.local_addr().unwrap();
            srv.spawn();
            a
        })
        .collect();
    Cluster { g, db, shares, addrs }
}

fn raw(addr: SocketAddr) -> (BufReader<TcpStream>, TcpStream) {
    let s = TcpStream::connect(addr).unwrap();
    (BufReader::new(s.try_clone().unwrap()), s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn query_round_trip(sums in prop::collection::vec(
        prop::collection::vec((1usize..=u16::MAX as usize, 0usize..=u32::MAX as usize), 0..6), 0..12)) {
        let q = WireQuery { sums };
        let bytes = encode_query(&q).unwrap();
        prop_assert_eq!(decode_query(&bytes).unwrap(), q);
    }

    #[test]
    fn answer_round_trip(values in prop::collection::vec(0u64..65521, 0..40)) {
        let f = Field::new(65521).unwrap();
        let a = WireAnswer { values: values.into_iter().map(|v| f.elem(v)).collect() };
        prop_assert_eq!(decode_answer(&encode_answer(&a), f).unwrap(), a);
    }
}

#[test]
fn mismatched_hello_gets_error_frame() {
    let c = cluster(2, 3, 2);
    let (mut r, mut w) = raw(c.addrs[0]);
    write_frame(&mut w, &Frame::new(TAG_HELLO, encode_hello(2))).unwrap();
    let reply = read_frame(&mut r).unwrap().unwrap();
    assert_eq!(reply.tag, TAG_ERROR);
    assert!(String::from_utf8(reply.body).unwrap().contains("server 1"));
    // and the server hangs up
    assert_eq!(read_frame(&mut r).unwrap(), None);

    match Connection::open(3, c.addrs[0], c.g.field()) {
        Err(Error::Remote { index: 3, .. }) => {}
        other => panic!("expected a remote error, got {:?}", other.err()),
    }
}

#[test]
fn zero_length_query_and_garbage() {
    let c = cluster(2, 3, 2);
    let mut conn = Connection::open(1, c.addrs[0], c.g.field()).unwrap();
    assert!(conn.query(&WireQuery::default()).unwrap().values.is_empty());

    let (mut r, mut w) = raw(c.addrs[1]);
    write_frame(&mut w, &Frame::new(TAG_HELLO, encode_hello(2))).unwrap();
    assert_eq!(read_frame(&mut r).unwrap().unwrap().tag, TAG_HELLO);
    w.write_all(&[0, 0, 0, 3, TAG_QUERY, 0, 0]).unwrap();
    assert_eq!(read_frame(&mut r).unwrap().unwrap().tag, TAG_ERROR);

    let mut conn = Connection::open(2, c.addrs[1], c.g.field()).unwrap();
    let q = WireQuery { sums: vec![vec![(1, 99)]] };
    assert!(matches!(conn.query(&q), Err(Error::Remote { index: 2, .. })));
}

#[test]
fn example_one_server_two_matches_in_process() {
    let c = cluster(2, 3, 2);
    let p = derive_params(2, 3, 2).unwrap();
    let plan = build_plan(1, &p, Permutations::identity(2, 3)).unwrap();
    let q = plan.canonicalize(1).wire;
    let mut conn = Connection::open(2, c.addrs[1], c.g.field()).unwrap();
    let remote = conn.query(&q).unwrap();
    assert_eq!(remote.values.len(), 3);
    assert_eq!(remote, answer(&c.shares[1], &q).unwrap());
}

#[test]
fn remote_matches_in_process_transcripts() {
    for (m, n, k, seed) in [(2, 3, 2, 5u64), (3, 4, 2, 6)] {
        let c = cluster(m, n, k);
        let p = derive_params(m, n, k).unwrap();
        for theta in 1..=m {
            let local = retrieve(&c.db, theta, seed, &p, &c.g).unwrap();
            let remote = remote_retrieve(&c.addrs, theta, seed, &p, &c.g).unwrap();
            assert_eq!(remote.to_json().unwrap(), local.to_json().unwrap());
            let again = remote_retrieve(&c.addrs, theta, seed, &p, &c.g).unwrap();
            assert_eq!(again, remote);
        }
    }
}

#[test]
fn interleaved_clients_see_serial_answers() {
    let c = cluster(3, 3, 2);
    let p = derive_params(3, 3, 2).unwrap();
    let queries: Vec<WireQuery> = (0..8)
        .map(|s| {
            let perms = codedpir::protocol::gen_permutations(s, 3, p.ltilde as usize);
            build_plan(1 + s as usize % 3, &p, perms).unwrap().canonicalize(2).wire
        })
        .collect();
    let expected: Vec<WireAnswer> = queries.iter().map(|q| answer(&c.shares[2], q).unwrap()).collect();
    thread::scope(|s| {
        for offset in 0..2 {
            let (queries, expected, addr, f) = (&queries, &expected, c.addrs[2], c.g.field());
            s.spawn(move || {
                let mut conn = Connection::open(3, addr, f).unwrap();
                for round in 0..queries.len() {
                    let idx = (round + offset * 3) % queries.len();
                    assert_eq!(conn.query(&queries[idx]).unwrap(), expected[idx]);
                }
            });
        }
    });
}

#[test]
fn unreachable_server_is_named() {
    let c = cluster(2, 3, 2);
    let p = derive_params(2, 3, 2).unwrap();
    // a port that was free a moment ago
    let dead = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let addrs = vec![c.addrs[0], dead, c.addrs[2]];
    match remote_retrieve(&addrs, 1, 0, &p, &c.g) {
        Err(Error::Connect { index: 2, .. }) => {}
        other => panic!("expected a connect error for server 2, got {:?}", other.err()),
    }
}

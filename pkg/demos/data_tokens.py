"""One day at a token-regulated data site."""

from gridecon.data_economy import DataSite, SiteCapacity, TokenHolder, negotiate_extra_tokens
from gridecon.economy import DEFAULT_CALENDAR as cal

site = DataSite("archive", SiteCapacity.from_terabytes(10))
monday = cal.at("mon", "00:00", week=1)
site.open_day(monday, {"physics": 3, "biology": 1})
print(f"provisioned {site.provisioned:,} tokens")
for user, b in site.buckets.items():
    print(f"  {user}: {b.balance:,}")

for user, mb, clock in (("physics", 200_000, "10:00"), ("biology", 150_000, "11:00"),
                        ("biology", 150_000, "22:00"), ("physics", 500_000, "23:00")):
    r = site.access(user, mb, cal.at("mon", clock, week=1))
    verdict = f"charged {r.charged:,}" if r.granted else f"denied, needs {r.required:,}, has {r.available:,}"
    print(f"{clock} {user} reads {mb:,} MB: {verdict}")

short = site.buckets["biology"]
deal = negotiate_extra_tokens(short, [TokenHolder(site.buckets["physics"], spare=1_000_000, ask=1)],
                              500_000, protocol="tender")
print(f"biology tenders for 500,000 tokens: {'got' if deal.granted else 'no deal'} "
      f"{deal.tokens:,} from {deal.counterparty}")
print(f"books balance: {site.conserved()}")

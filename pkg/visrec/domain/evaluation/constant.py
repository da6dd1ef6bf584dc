DEFAULT_RECALL_KS = (1, 5, 10, 20)

RATING_LABELS = ("Excellent", "Good", "Bad", "Very Bad")

# category of image queries that name none
ALL_CATEGORIES = "all"

REPORT_JSON = "report.json"
ACCURACY_CSV = "accuracy.csv"
RECALL_CSV = "recall.csv"
RATINGS_CSV = "ratings.csv"
RECALL_SVG = "recall.svg"
